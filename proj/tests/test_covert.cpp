#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "covert.hpp"
#include "support/oracles.hpp"

using namespace transim;

namespace {

const std::vector<std::uint8_t> kHi = {0x48, 0x49};

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

}  // namespace

TEST(Symbols, MostSignificantBitFirstWithZeroPadding) {
  EXPECT_EQ(to_symbols(kHi, 3), (std::vector<unsigned>{2, 2, 0, 4, 4, 4}));
  EXPECT_EQ(to_symbols(kHi, 8), (std::vector<unsigned>{0x48, 0x49}));
  EXPECT_EQ(to_symbols({0xff}, 6), (std::vector<unsigned>{63, 0x30}));
  EXPECT_EQ(to_symbols(kHi, 1).size(), 16u);
}

TEST(Channel, RequiredMemoryDoublesPerBit) {
  auto reports = sweep_bits(kHi, builtin_profile("intel_i7"), 1, 6, {});
  ASSERT_EQ(reports.size(), 6u);
  for (unsigned b = 1; b <= 6; ++b) EXPECT_EQ(reports[b - 1].required_memory_bytes, 64u << b);
}

TEST(Channel, NoiseFreeTransferIsExact) {
  const auto& i7 = builtin_profile("intel_i7");
  for (const auto& msg : {kHi, random_bytes(1024, 4)}) {
    for (unsigned b = 1; b <= kMaxBitsPerCs; ++b) {
      ChannelConfig cfg;
      cfg.bits_per_cs = b;
      auto r = run_channel(msg, cfg, i7);
      EXPECT_FALSE(r.aborted);
      EXPECT_EQ(r.bit_errors, 0u) << "b=" << b << " size=" << msg.size();
      EXPECT_EQ(r.erasures, 0u);
      EXPECT_EQ(r.received, msg);
      EXPECT_EQ(r.bits_sent, msg.size() * 8);
      EXPECT_EQ(r.symbols_sent, (msg.size() * 8 + b - 1) / b);
    }
  }
}

TEST(Channel, ConfusionMatrixIsDiagonalWithoutNoise) {
  ChannelConfig cfg;
  cfg.bits_per_cs = 2;
  auto r = run_channel(random_bytes(64, 1), cfg, builtin_profile("cortex_a72"));
  std::uint64_t total = 0;
  for (unsigned s = 0; s < 4; ++s)
    for (unsigned d = 0; d <= 4; ++d) {
      if (s != d) EXPECT_EQ(r.confusion[s][d], 0u);
      total += r.confusion[s][d];
    }
  EXPECT_EQ(total, r.symbols_sent);
}

TEST(Channel, BandwidthIsUnimodalWithPeakAtThreeBits) {
  auto reports = sweep_bits(random_bytes(1024, 0x5eed), builtin_profile("intel_i7"), 1, 6, {});
  std::size_t peak = 0;
  for (std::size_t i = 1; i < reports.size(); ++i)
    if (reports[i].bandwidth_bits_per_cycle() > reports[peak].bandwidth_bits_per_cycle()) peak = i;
  EXPECT_EQ(reports[peak].bits_per_cs, 3u);
  for (std::size_t i = 1; i <= peak; ++i)
    EXPECT_GT(reports[i].bandwidth_bits_per_cycle(), reports[i - 1].bandwidth_bits_per_cycle());
  for (std::size_t i = peak + 1; i < reports.size(); ++i)
    EXPECT_LT(reports[i].bandwidth_bits_per_cycle(), reports[i - 1].bandwidth_bits_per_cycle());
}

TEST(Channel, SymbolErrorRateTracksNoiseProbability) {
  // Smaller than the acceptance run but still a statistically meaningful
  // sample: 12000 symbols at 3 bits.
  const auto msg = random_bytes(4500, 17);
  for (double p : {0.01, 0.05, 0.2}) {
    ChannelConfig cfg;
    cfg.noise_probability = p;
    cfg.seed = 321;
    auto r = run_channel(msg, cfg, builtin_profile("intel_i7"));
    ASSERT_EQ(r.symbols_sent, 12000u);
    auto [lo, hi] = oracle::binomial_ci99(p, static_cast<double>(r.symbols_sent));
    EXPECT_GE(r.symbol_error_rate(), lo) << p;
    EXPECT_LE(r.symbol_error_rate(), hi) << p;
  }
}

TEST(Channel, ShiftedReceiverLayoutBreaksTheChannel) {
  ChannelConfig cfg;
  cfg.receiver_shift = 1;
  auto r = run_channel(kHi, cfg, builtin_profile("intel_i7"));
  EXPECT_EQ(r.erasures, r.symbols_sent);
  EXPECT_EQ(r.bit_errors, r.bits_sent);
}

TEST(Channel, InOrderCoreDeliversOnlyErasures) {
  auto r = run_channel(kHi, {}, builtin_profile("cortex_a53"));
  EXPECT_FALSE(r.aborted);
  EXPECT_EQ(r.erasures, r.symbols_sent);
  EXPECT_EQ(r.bit_errors, r.bits_sent);
}

TEST(Channel, PrivilegedFlushAbortsTheTransfer) {
  MitigationSet m;
  m.privileged_flush = true;
  auto r = run_channel(kHi, {}, apply(builtin_profile("intel_i7"), m));
  EXPECT_TRUE(r.aborted);
  EXPECT_FALSE(r.error.empty());
  EXPECT_EQ(r.bandwidth_bits_per_cycle(), 0.0);
}

TEST(Channel, RsbFlushOnContextSwitchStopsInjection) {
  MitigationSet m;
  m.rsb_flush_on_cs = true;
  m.btb_fallback_disabled = true;
  for (const auto& p : builtin_profiles()) {
    auto r = run_channel(kHi, {}, apply(p, m));
    EXPECT_EQ(r.erasures, r.symbols_sent) << p.name;
  }
}

TEST(Channel, SenderFillsRsbWithLandingPad) {
  Core core(builtin_profile("intel_i7"));
  ChannelConfig cfg;
  sender_inject(core, 5, cfg);
  EXPECT_EQ(core.rsb().count(), core.rsb().size());
  for (Addr a : core.rsb().snapshot()) EXPECT_EQ(a, gadget_landing(5));

  Core shallow(builtin_profile("intel_i7"));
  cfg.rsb_fill_depth = 3;
  sender_inject(shallow, 2, cfg);
  // Mispredicted loop exits push further landing pads on the wrong path.
  EXPECT_GE(shallow.rsb().count(), 3u);
  for (Addr a : shallow.rsb().snapshot()) EXPECT_EQ(a, gadget_landing(2));
}

TEST(Channel, GadgetAddressesAreDistinct) {
  std::set<Addr> seen;
  for (unsigned s = 0; s < (1u << kMaxBitsPerCs); ++s) {
    EXPECT_TRUE(seen.insert(gadget_entry(s)).second);
    EXPECT_TRUE(seen.insert(gadget_landing(s)).second);
  }
}

TEST(Channel, ConfigurationIsChecked) {
  auto bad = [](auto mutate) {
    ChannelConfig cfg;
    mutate(cfg);
    try {
      run_channel(kHi, cfg, builtin_profile("intel_i7"));
    } catch (const Error& e) {
      return e.code() == ErrorCode::Config;
    }
    return false;
  };
  EXPECT_TRUE(bad([](ChannelConfig& c) { c.bits_per_cs = 0; }));
  EXPECT_TRUE(bad([](ChannelConfig& c) { c.bits_per_cs = 7; }));
  EXPECT_TRUE(bad([](ChannelConfig& c) { c.noise_probability = 1.5; }));
  EXPECT_TRUE(bad([](ChannelConfig& c) { c.rsb_fill_depth = 0; }));
  EXPECT_TRUE(bad([](ChannelConfig& c) { c.receiver_shift = kMaxReceiverShift + 1; }));
  EXPECT_THROW(sweep_bits(kHi, builtin_profile("intel_i7"), 4, 2, {}), Error);
}

TEST(Channel, LatencyTraceOnRequest) {
  ChannelConfig cfg;
  cfg.bits_per_cs = 2;
  cfg.emit_latency_trace = true;
  auto r = run_channel(kHi, cfg, builtin_profile("intel_i7"));
  ASSERT_EQ(r.latency_trace.size(), r.symbols_sent);
  for (const auto& [sent, lat] : r.latency_trace) EXPECT_EQ(lat.size(), 4u);
  auto csv = r.latency_trace_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "symbol,sent,line,latency");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * static_cast<long>(r.symbols_sent));
}

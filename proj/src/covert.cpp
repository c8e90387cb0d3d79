#include "covert.hpp"

#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "attacks.hpp"

namespace transim {

namespace {

constexpr Addr kBlockStride = 32;
constexpr Addr kSenderStack = 0x600000;
constexpr Addr kReceiverStack = 0x700000;
constexpr Addr kChannelOracle = layout::kOracle;

}  // namespace

void ChannelConfig::check() const {
  if (bits_per_cs < 1 || bits_per_cs > kMaxBitsPerCs)
    throw Error(ErrorCode::Config, fmt::format("bits_per_cs {} out of range [1, {}]", bits_per_cs, kMaxBitsPerCs));
  if (context_switch_cost < 0 || probe_cost_per_line < 0) throw Error(ErrorCode::Config, "channel costs must be >= 0");
  if (!(noise_probability >= 0.0 && noise_probability <= 1.0))
    throw Error(ErrorCode::Config, fmt::format("noise probability {} out of range [0, 1]", noise_probability));
  if (rsb_fill_depth && *rsb_fill_depth == 0) throw Error(ErrorCode::Config, "rsb_fill_depth must be positive");
  if (receiver_shift > kMaxReceiverShift)
    throw Error(ErrorCode::Config, fmt::format("receiver_shift must be <= {}", kMaxReceiverShift));
}

double ChannelReport::bandwidth_bits_per_cycle() const {
  if (aborted || total_cycles <= 0) return 0.0;
  return static_cast<double>(bits_sent) / static_cast<double>(total_cycles);
}

double ChannelReport::symbol_error_rate() const {
  return symbols_sent == 0 ? 0.0 : static_cast<double>(symbol_errors) / static_cast<double>(symbols_sent);
}

std::string ChannelReport::to_json() const {
  nlohmann::json j;
  j["bits_per_cs"] = bits_per_cs;
  j["bits_sent"] = bits_sent;
  j["bit_errors"] = bit_errors;
  j["symbols_sent"] = symbols_sent;
  j["symbol_errors"] = symbol_errors;
  j["erasures"] = erasures;
  j["total_cycles"] = total_cycles;
  j["bandwidth_bits_per_kcycle"] = bandwidth_bits_per_kcycle();
  j["kb_per_mcycle"] = kb_per_mcycle();
  j["required_memory_bytes"] = required_memory_bytes;
  j["confusion"] = confusion;
  j["aborted"] = aborted;
  if (!error.empty()) j["error"] = error;
  std::string hex;
  for (auto b : received) hex += fmt::format("{:02x}", b);
  j["received_hex"] = hex;
  return j.dump();
}

std::string ChannelReport::latency_trace_csv() const {
  std::string out = "symbol,sent,line,latency\n";
  for (std::size_t i = 0; i < latency_trace.size(); ++i) {
    const auto& [sent, lat] = latency_trace[i];
    for (std::size_t line = 0; line < lat.size(); ++line) out += fmt::format("{},{},{},{}\n", i, sent, line, lat[line]);
  }
  return out;
}

std::string covert_image_source(unsigned bits_per_cs, unsigned receiver_shift) {
  unsigned n = 1u << bits_per_cs;
  std::string src;
  for (unsigned s = 0; s < n; ++s) {
    unsigned used = 0;
    auto line = [&](const std::string& text) {
      src += text;
      src += '\n';
      ++used;
    };
    src += fmt::format("inj_{}:\n", s);
    line("  ADD r1, r1, -1");
    line("  CMP r0, r1");
    line(fmt::format("  BGE done_{}", s));
    line(fmt::format("  CALL inj_{}", s));
    for (unsigned k = 0; k < receiver_shift; ++k) line("  HALT");
    src += fmt::format("land_{}:\n", s);
    line(fmt::format("  LD r4, [r3+{}]", s * kLineSize));
    line("  HALT");
    src += fmt::format("done_{}:\n", s);
    line("  YIELD");
    while (used < kBlockStride) line("  HALT");
  }
  src += R"(recv_loop:
  CALL recv_yield
recv_after:
  CMP r0, r0
  BGE recv_loop
recv_yield:
  YIELD
  RET
)";
  return src;
}

Addr gadget_entry(unsigned symbol) { return Addr{symbol} * kBlockStride; }
Addr gadget_landing(unsigned symbol) { return gadget_entry(symbol) + 4; }

std::vector<unsigned> to_symbols(const std::vector<std::uint8_t>& message, unsigned bits_per_cs) {
  std::vector<unsigned> out;
  unsigned acc = 0, have = 0;
  for (auto byte : message) {
    for (int bit = 7; bit >= 0; --bit) {
      acc = (acc << 1) | ((byte >> bit) & 1u);
      if (++have == bits_per_cs) {
        out.push_back(acc);
        acc = 0;
        have = 0;
      }
    }
  }
  if (have > 0) out.push_back(acc << (bits_per_cs - have));
  return out;
}

namespace {

std::vector<std::uint8_t> from_symbols(const std::vector<unsigned>& symbols, unsigned bits_per_cs,
                                       std::size_t bytes) {
  std::vector<std::uint8_t> out(bytes, 0);
  std::size_t bit_index = 0;
  for (auto sym : symbols) {
    for (int bit = static_cast<int>(bits_per_cs) - 1; bit >= 0; --bit, ++bit_index) {
      if (bit_index >= bytes * 8) return out;
      if ((sym >> bit) & 1u) out[bit_index / 8] |= static_cast<std::uint8_t>(0x80u >> (bit_index % 8));
    }
  }
  return out;
}

Context sender_context(const std::shared_ptr<const Program>& image, unsigned symbol, unsigned depth) {
  Context c(image);
  c.pc = gadget_entry(symbol);
  c.regs[0] = 0;
  c.regs[1] = static_cast<std::int64_t>(depth) + 1;
  c.regs[3] = static_cast<std::int64_t>(kChannelOracle);
  c.regs[kStackReg] = static_cast<std::int64_t>(kSenderStack);
  return c;
}

unsigned fill_depth(const Core& core, const ChannelConfig& config) {
  return config.rsb_fill_depth.value_or(core.profile().rsb_size);
}

}  // namespace

void sender_inject(Core& core, unsigned symbol, const ChannelConfig& config) {
  config.check();
  if (symbol >= config.symbols()) throw Error(ErrorCode::InvalidArgument, "symbol out of range");
  auto image = std::make_shared<const Program>(assemble(covert_image_source(config.bits_per_cs)));
  auto ctx = sender_context(image, symbol, fill_depth(core, config));
  RunLimits limits;
  limits.record_trace = false;
  auto r = run(core, ctx, limits);
  if (r.status != RunStatus::Yielded)
    throw Error(ErrorCode::Internal, fmt::format("sender did not yield: {}", to_string(r.status)));
}

ChannelReport run_channel(const std::vector<std::uint8_t>& message, const ChannelConfig& config,
                          const CpuProfile& profile) {
  config.check();
  const unsigned b = config.bits_per_cs;
  const unsigned n = config.symbols();

  ChannelReport rep;
  rep.bits_per_cs = b;
  rep.required_memory_bytes = config.required_memory_bytes();
  rep.confusion.assign(n, std::vector<std::uint64_t>(n + 1, 0));

  Core core(profile, config.seed);
  std::mt19937_64 noise_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::bernoulli_distribution interloper(config.noise_probability);
  std::uniform_int_distribution<Addr> interloper_pc(0, 0xffff);
  std::uniform_int_distribution<unsigned> interloper_line(0, n - 1);
  const Cycle threshold = default_threshold(profile.latencies);
  const unsigned depth = fill_depth(core, config);

  auto sender_image = std::make_shared<const Program>(assemble(covert_image_source(b)));
  auto receiver_image = config.receiver_shift == 0
                            ? sender_image
                            : std::make_shared<const Program>(assemble(covert_image_source(b, config.receiver_shift)));

  RunLimits limits;
  limits.record_trace = false;

  auto context_switch = [&] {
    core.on_context_switch();
    core.advance(config.context_switch_cost);
    if (config.noise_probability > 0 && interloper(noise_rng)) {
      // An unrelated process runs: one call deep and one stray line.
      core.rsb().push(kInterloperBase + interloper_pc(noise_rng));
      core.mem().access(kChannelOracle + Addr{interloper_line(noise_rng)} * kLineSize, Privilege::User);
    }
  };

  Context receiver(receiver_image);
  receiver.pc = receiver_image->label("recv_loop");
  receiver.regs[3] = static_cast<std::int64_t>(kChannelOracle);
  receiver.regs[kStackReg] = static_cast<std::int64_t>(kReceiverStack);
  auto boot = run(core, receiver, limits);
  if (boot.status != RunStatus::Yielded)
    throw Error(ErrorCode::Internal, fmt::format("receiver did not yield: {}", to_string(boot.status)));

  const auto symbols = to_symbols(message, b);
  const std::uint64_t total_bits = std::uint64_t{message.size()} * 8;
  std::vector<unsigned> decoded_symbols;
  decoded_symbols.reserve(symbols.size());

  try {
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      const unsigned sent = symbols[i];
      context_switch();
      auto sender = sender_context(sender_image, sent, depth);
      auto rs = run(core, sender, limits);

      context_switch();
      flush_lines(core, kChannelOracle, n);
      auto rr = run(core, receiver, limits);
      if (rr.status != RunStatus::Yielded)
        throw Error(ErrorCode::Internal, fmt::format("receiver did not yield: {}", to_string(rr.status)));
      auto probe = reload_lines(core, kChannelOracle, n, threshold);

      auto hits = probe.hit_lines();
      std::optional<unsigned> got;
      if (hits.size() == 1) got = hits[0];
      rep.confusion[sent][got ? *got : n] += 1;
      decoded_symbols.push_back(got.value_or(0));

      const std::uint64_t first_bit = std::uint64_t{i} * b;
      const std::uint64_t bits_here = std::min<std::uint64_t>(b, total_bits - first_bit);
      for (std::uint64_t k = 0; k < bits_here; ++k) {
        unsigned shift = b - 1 - static_cast<unsigned>(k);
        bool want = (sent >> shift) & 1u;
        bool have = got && ((*got >> shift) & 1u);
        if (!got || want != have) ++rep.bit_errors;
      }
      if (!got) ++rep.erasures;
      if (!got || *got != sent) ++rep.symbol_errors;
      ++rep.symbols_sent;
      rep.bits_sent += bits_here;
      rep.total_cycles +=
          2 * config.context_switch_cost + Cycle{n} * config.probe_cost_per_line + rs.cycles() + rr.cycles();
      if (config.emit_latency_trace) rep.latency_trace.emplace_back(sent, std::move(probe.latencies));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::PrivilegedFlush) throw;
    rep.aborted = true;
    rep.error = e.what();
    rep.bits_sent = 0;
    rep.bit_errors = 0;
    return rep;
  }
  rep.received = from_symbols(decoded_symbols, b, message.size());
  return rep;
}

std::vector<ChannelReport> sweep_bits(const std::vector<std::uint8_t>& message, const CpuProfile& profile,
                                      unsigned b_min, unsigned b_max, const ChannelConfig& base) {
  if (b_min < 1 || b_max > kMaxBitsPerCs || b_min > b_max)
    throw Error(ErrorCode::Config, fmt::format("bits range [{}, {}] invalid; must lie in [1, {}]", b_min, b_max,
                                               kMaxBitsPerCs));
  std::vector<ChannelReport> out;
  for (unsigned b = b_min; b <= b_max; ++b) {
    auto cfg = base;
    cfg.bits_per_cs = b;
    out.push_back(run_channel(message, cfg, profile));
  }
  return out;
}

std::string sweep_csv(const std::vector<ChannelReport>& reports) {
  std::string out = "b,bandwidth,errors,memory\n";
  for (const auto& r : reports)
    out += fmt::format("{},{:.6f},{},{}\n", r.bits_per_cs, r.bandwidth_bits_per_kcycle(), r.bit_errors,
                       r.required_memory_bytes);
  return out;
}

}  // namespace transim

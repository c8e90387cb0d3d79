#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace transim {

struct ChannelConfig {
  unsigned bits_per_cs = 3;
  Cycle context_switch_cost = 1000;
  Cycle probe_cost_per_line = 300;
  double noise_probability = 0.0;
  std::optional<unsigned> rsb_fill_depth;  // defaults to the profile's RSB size
  // Receiver-side landing pads moved by this many instructions; any non-zero
  // value breaks the shared-layout assumption.
  unsigned receiver_shift = 0;
  bool emit_latency_trace = false;
  std::uint64_t seed = 0x5eed;

  void check() const;
  unsigned symbols() const { return 1u << bits_per_cs; }
  std::uint64_t required_memory_bytes() const { return std::uint64_t{symbols()} * kLineSize; }
};

inline constexpr unsigned kMaxBitsPerCs = 6;
inline constexpr unsigned kMaxReceiverShift = 16;

struct ChannelReport {
  unsigned bits_per_cs = 0;
  std::uint64_t bits_sent = 0;
  std::uint64_t bit_errors = 0;
  std::uint64_t symbols_sent = 0;
  std::uint64_t symbol_errors = 0;  // wrong symbol or erasure
  std::uint64_t erasures = 0;
  Cycle total_cycles = 0;
  std::uint64_t required_memory_bytes = 0;
  // confusion[sent][decoded]; the last column counts erasures.
  std::vector<std::vector<std::uint64_t>> confusion;
  std::vector<std::uint8_t> received;  // erased symbols decode as zero bits
  bool aborted = false;
  std::string error;
  // Per symbol: sent value and the measured reload latency of every line.
  std::vector<std::pair<unsigned, std::vector<Cycle>>> latency_trace;

  double bandwidth_bits_per_cycle() const;
  double bandwidth_bits_per_kcycle() const { return bandwidth_bits_per_cycle() * 1e3; }
  // Kilobytes per million simulated cycles.
  double kb_per_mcycle() const { return bandwidth_bits_per_cycle() * 1e6 / 8.0 / 1024.0; }
  double symbol_error_rate() const;

  std::string to_json() const;
  std::string latency_trace_csv() const;  // symbol,sent,line,latency
};

// Shared code image: one injection gadget per symbol at a fixed address plus
// the receiver's call/yield/return loop.
std::string covert_image_source(unsigned bits_per_cs, unsigned receiver_shift = 0);
Addr gadget_entry(unsigned symbol);
Addr gadget_landing(unsigned symbol);

// Sender context for one symbol: fills the RSB with the symbol's landing pad
// and yields. Exposed for tests of the injection step.
void sender_inject(Core& core, unsigned symbol, const ChannelConfig& config);

ChannelReport run_channel(const std::vector<std::uint8_t>& message, const ChannelConfig& config,
                          const CpuProfile& profile);

std::vector<ChannelReport> sweep_bits(const std::vector<std::uint8_t>& message, const CpuProfile& profile,
                                      unsigned b_min, unsigned b_max, const ChannelConfig& base);
std::string sweep_csv(const std::vector<ChannelReport>& reports);  // b,bandwidth,errors,memory

// Message bits taken b at a time, most significant bit first, zero padded.
std::vector<unsigned> to_symbols(const std::vector<std::uint8_t>& message, unsigned bits_per_cs);

}  // namespace transim

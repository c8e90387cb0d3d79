#pragma once

// L1/L2/DRAM hierarchy, page table and PMU-style cycle counter. One instance
// belongs to exactly one simulated core.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace transim {

enum class Level { L1, L2, Dram };
std::string_view level_name(Level level);

struct CacheGeometry {
  unsigned sets = 64;
  unsigned ways = 8;

  std::size_t capacity() const { return std::size_t{sets} * ways * kLineSize; }
  void check() const;  // throws unless sets and ways are powers of two
};

struct Latencies {
  Cycle l1 = 4;
  Cycle l2 = 12;
  Cycle dram = 200;
  Cycle page_fault = 1000;

  void check() const;  // throws unless l1 < l2 < dram < page_fault
};

// One set-associative level with strict LRU. Tags are full line addresses.
class Cache {
 public:
  explicit Cache(CacheGeometry geometry);

  const CacheGeometry& geometry() const { return geometry_; }
  unsigned set_index(Addr addr) const { return static_cast<unsigned>((addr / kLineSize) & (geometry_.sets - 1)); }

  bool contains(Addr addr) const;
  // Hit: refresh LRU and return true. Miss: return false, state untouched.
  bool touch(Addr addr);
  // Inserts the line as MRU; returns the evicted line, if any.
  std::optional<Addr> insert(Addr addr);
  bool invalidate(Addr addr);
  void clear();

 private:
  struct Way {
    Addr line = 0;
    std::uint64_t stamp = 0;
    bool valid = false;
  };
  Way* find(Addr line);
  const Way* find(Addr line) const;

  CacheGeometry geometry_;
  std::vector<Way> ways_;
  std::uint64_t clock_ = 0;
};

struct PageEntry {
  bool mapped = true;
  bool privileged = false;
};

// Pages absent from the table are mapped user pages; entries override that.
class PageTable {
 public:
  PageEntry lookup(Addr addr) const;
  void set(Addr addr, PageEntry entry) { entries_[page_of(addr)] = entry; }
  void map(Addr addr) { entries_[page_of(addr)].mapped = true; }
  void unmap(Addr addr) { entries_[page_of(addr)].mapped = false; }
  void set_privileged(Addr addr, bool privileged) { entries_[page_of(addr)].privileged = privileged; }

 private:
  std::unordered_map<Addr, PageEntry> entries_;
};

class CycleCounter {
 public:
  CycleCounter(Cycle resolution = 1, Cycle noise_amplitude = 0, std::uint64_t seed = 0x5eed);

  Cycle current() const { return current_; }
  void advance(Cycle n) { current_ += n; }
  void advance_to(Cycle c) {
    if (c > current_) current_ = c;
  }

  Cycle resolution() const { return resolution_; }
  Cycle noise_amplitude() const { return noise_amplitude_; }
  void set_noise_amplitude(Cycle a) { noise_amplitude_ = a; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  // Quantized reading of the current cycle plus uniform noise when enabled.
  Cycle read() { return read_at(current_); }
  Cycle read_at(Cycle cycle);
  // Timed access with the counter reset right before it: quantized latency
  // plus one noise sample.
  Cycle measure(Cycle latency);

 private:
  Cycle noise();

  Cycle current_ = 0;
  Cycle resolution_;
  Cycle noise_amplitude_;
  std::mt19937_64 rng_;
};

struct MemoryConfig {
  CacheGeometry l1{128, 4};
  CacheGeometry l2{512, 16};
  Latencies latencies;
  Cycle counter_resolution = 1;
  Cycle noise_amplitude = 0;
  std::uint64_t seed = 0x5eed;
};

enum class MemFault { PageFault, PrivilegeFault };

struct AccessResult {
  std::int64_t value = 0;
  Cycle latency = 0;
  Level level = Level::Dram;
  std::optional<MemFault> fault;

  bool ok() const { return !fault.has_value(); }
};

// Eviction loop shape: N iterations, each issuing D accesses, window start
// shifted by A congruent lines per iteration.
struct EvictionParams {
  unsigned loop_length = 0;      // N
  unsigned shift_offset = 0;     // A
  unsigned accesses_per_iter = 0;  // D

  friend bool operator==(const EvictionParams&, const EvictionParams&) = default;
};

struct EvictionRequest {
  Addr base = 0;
  std::size_t region_bytes = 0;
  EvictionParams params;
  Addr target = 0;
};

struct EvictionStep {
  unsigned iteration;
  unsigned access_index;
  Addr address;
  Level level;
};

struct EvictionTrace {
  std::vector<EvictionStep> steps;
  std::string to_csv() const;  // iteration,access_index,address,level
};

class MemorySystem {
 public:
  explicit MemorySystem(const MemoryConfig& config);

  // Demand access: fills L2 and L1 on miss, updates LRU, advances nothing.
  // Privilege faults still perform the access (the permission check is the
  // caller's to defer); page faults touch no cache state.
  AccessResult access(Addr addr, Privilege privilege);
  // Fill without a data read, used by committed stores.
  void allocate(Addr addr);
  // Where the line currently sits, without changing any state.
  Level probe(Addr addr) const;

  void flush_line(Addr addr, Privilege privilege, bool flush_is_privileged);
  // Drops a line brought in by a cancelled transient fill.
  void cancel_fill(Addr addr, Level served_from);

  EvictionTrace evict_with_pattern(const EvictionRequest& request);
  // Touches buffer_size bytes line by line from the sweep region.
  void sweep_evict(std::size_t buffer_size);
  static constexpr Addr kSweepBase = 0x4000'0000;

  std::int64_t read(Addr addr) const;
  void write(Addr addr, std::int64_t value);
  const std::unordered_map<Addr, std::int64_t>& contents() const { return data_; }

  Cache& l1() { return l1_; }
  Cache& l2() { return l2_; }
  const Cache& l1() const { return l1_; }
  const Cache& l2() const { return l2_; }
  PageTable& page_table() { return pages_; }
  const PageTable& page_table() const { return pages_; }
  CycleCounter& counter() { return counter_; }
  const CycleCounter& counter() const { return counter_; }
  const Latencies& latencies() const { return latencies_; }
  Cycle latency_of(Level level) const;

 private:
  Cache l1_;
  Cache l2_;
  PageTable pages_;
  CycleCounter counter_;
  Latencies latencies_;
  std::unordered_map<Addr, std::int64_t> data_;
};

}  // namespace transim

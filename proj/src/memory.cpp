#include "memory.hpp"

#include <bit>

#include <fmt/format.h>

namespace transim {

std::string_view level_name(Level level) {
  switch (level) {
    case Level::L1: return "L1";
    case Level::L2: return "L2";
    case Level::Dram: return "DRAM";
  }
  return "?";
}

void CacheGeometry::check() const {
  if (sets == 0 || ways == 0 || !std::has_single_bit(sets) || !std::has_single_bit(ways))
    throw Error(ErrorCode::Config, fmt::format("cache sets ({}) and ways ({}) must be powers of two", sets, ways));
}

void Latencies::check() const {
  if (!(0 < l1 && l1 < l2 && l2 < dram && dram < page_fault))
    throw Error(ErrorCode::Config,
                fmt::format("latencies must satisfy 0 < L1 < L2 < DRAM < page fault (got {}, {}, {}, {})", l1, l2, dram,
                            page_fault));
}

Cache::Cache(CacheGeometry geometry) : geometry_(geometry) {
  geometry_.check();
  ways_.resize(std::size_t{geometry_.sets} * geometry_.ways);
}

Cache::Way* Cache::find(Addr line) {
  auto base = std::size_t{set_index(line)} * geometry_.ways;
  for (unsigned w = 0; w < geometry_.ways; ++w) {
    auto& way = ways_[base + w];
    if (way.valid && way.line == line) return &way;
  }
  return nullptr;
}

const Cache::Way* Cache::find(Addr line) const { return const_cast<Cache*>(this)->find(line); }

bool Cache::contains(Addr addr) const { return find(line_of(addr)) != nullptr; }

bool Cache::touch(Addr addr) {
  if (auto* way = find(line_of(addr))) {
    way->stamp = ++clock_;
    return true;
  }
  return false;
}

std::optional<Addr> Cache::insert(Addr addr) {
  Addr line = line_of(addr);
  if (auto* way = find(line)) {
    way->stamp = ++clock_;
    return std::nullopt;
  }
  auto base = std::size_t{set_index(line)} * geometry_.ways;
  Way* victim = &ways_[base];
  for (unsigned w = 0; w < geometry_.ways; ++w) {
    auto& way = ways_[base + w];
    if (!way.valid) {
      victim = &way;
      break;
    }
    if (way.stamp < victim->stamp) victim = &way;
  }
  std::optional<Addr> evicted;
  if (victim->valid) evicted = victim->line;
  *victim = Way{line, ++clock_, true};
  return evicted;
}

bool Cache::invalidate(Addr addr) {
  if (auto* way = find(line_of(addr))) {
    way->valid = false;
    return true;
  }
  return false;
}

void Cache::clear() {
  for (auto& w : ways_) w.valid = false;
}

PageEntry PageTable::lookup(Addr addr) const {
  auto it = entries_.find(page_of(addr));
  return it == entries_.end() ? PageEntry{} : it->second;
}

CycleCounter::CycleCounter(Cycle resolution, Cycle noise_amplitude, std::uint64_t seed)
    : resolution_(resolution), noise_amplitude_(noise_amplitude), rng_(seed) {
  if (resolution_ < 1) throw Error(ErrorCode::Config, "counter resolution must be >= 1");
  if (noise_amplitude_ < 0) throw Error(ErrorCode::Config, "noise amplitude must be >= 0");
}

Cycle CycleCounter::noise() {
  if (noise_amplitude_ == 0) return 0;
  std::uniform_int_distribution<Cycle> dist(-noise_amplitude_, noise_amplitude_);
  return dist(rng_);
}

Cycle CycleCounter::read_at(Cycle cycle) { return (cycle / resolution_) * resolution_ + noise(); }

Cycle CycleCounter::measure(Cycle latency) { return (latency / resolution_) * resolution_ + noise(); }

std::string EvictionTrace::to_csv() const {
  std::string out = "iteration,access_index,address,level\n";
  for (const auto& s : steps)
    out += fmt::format("{},{},0x{:x},{}\n", s.iteration, s.access_index, s.address, level_name(s.level));
  return out;
}

MemorySystem::MemorySystem(const MemoryConfig& config)
    : l1_(config.l1),
      l2_(config.l2),
      counter_(config.counter_resolution, config.noise_amplitude, config.seed),
      latencies_(config.latencies) {
  latencies_.check();
}

Cycle MemorySystem::latency_of(Level level) const {
  switch (level) {
    case Level::L1: return latencies_.l1;
    case Level::L2: return latencies_.l2;
    case Level::Dram: return latencies_.dram;
  }
  return latencies_.dram;
}

Level MemorySystem::probe(Addr addr) const {
  if (l1_.contains(addr)) return Level::L1;
  if (l2_.contains(addr)) return Level::L2;
  return Level::Dram;
}

AccessResult MemorySystem::access(Addr addr, Privilege privilege) {
  AccessResult r;
  PageEntry page = pages_.lookup(addr);
  if (!page.mapped) {
    r.fault = MemFault::PageFault;
    r.latency = latencies_.page_fault;
    return r;
  }
  if (page.privileged && privilege == Privilege::User) r.fault = MemFault::PrivilegeFault;

  if (l1_.touch(addr)) {
    r.level = Level::L1;
  } else if (l2_.touch(addr)) {
    r.level = Level::L2;
    l1_.insert(addr);
  } else {
    r.level = Level::Dram;
    l2_.insert(addr);
    l1_.insert(addr);
  }
  r.latency = latency_of(r.level);
  r.value = read(addr);
  return r;
}

void MemorySystem::allocate(Addr addr) {
  if (!l1_.touch(addr)) {
    if (!l2_.touch(addr)) l2_.insert(addr);
    l1_.insert(addr);
  }
}

void MemorySystem::flush_line(Addr addr, Privilege privilege, bool flush_is_privileged) {
  if (flush_is_privileged && privilege == Privilege::User)
    throw Error(ErrorCode::PrivilegedFlush, "cache flush is privileged: user-mode flush rejected");
  l1_.invalidate(addr);
  l2_.invalidate(addr);
}

void MemorySystem::cancel_fill(Addr addr, Level served_from) {
  if (served_from == Level::L1) return;
  l1_.invalidate(addr);
  if (served_from == Level::Dram) l2_.invalidate(addr);
}

EvictionTrace MemorySystem::evict_with_pattern(const EvictionRequest& request) {
  const auto& p = request.params;
  EvictionTrace trace;
  if (p.loop_length == 0 || p.accesses_per_iter == 0) return trace;

  // Congruent in L2 implies congruent in L1 (both index with low line bits).
  const Addr stride = Addr{std::max(l1_.geometry().sets, l2_.geometry().sets)} * kLineSize;
  const Addr set_offset = line_of(request.target) % stride;
  Addr first = line_of(request.base);
  first = first - (first % stride) + set_offset;
  if (first < request.base) first += stride;

  const Addr distinct = Addr{p.loop_length - 1} * p.shift_offset + p.accesses_per_iter;
  const Addr last = first + (distinct - 1) * stride;
  if (last + kLineSize > request.base + request.region_bytes)
    throw Error(ErrorCode::Precondition,
                fmt::format("eviction region too small: need {} bytes past base, have {}",
                            last + kLineSize - request.base, request.region_bytes));

  for (unsigned i = 0; i < p.loop_length; ++i) {
    for (unsigned k = 0; k < p.accesses_per_iter; ++k) {
      Addr a = first + (Addr{i} * p.shift_offset + k) * stride;
      auto r = access(a, Privilege::User);
      counter_.advance(r.latency);
      trace.steps.push_back({i, k, a, r.level});
    }
  }
  return trace;
}

void MemorySystem::sweep_evict(std::size_t buffer_size) {
  if (buffer_size < 3 * l2_.geometry().capacity())
    throw Error(ErrorCode::Precondition,
                fmt::format("sweep buffer of {} bytes is below 3x L2 capacity ({} bytes)", buffer_size,
                            3 * l2_.geometry().capacity()));
  for (Addr off = 0; off < buffer_size; off += kLineSize) {
    auto r = access(kSweepBase + off, Privilege::User);
    counter_.advance(r.latency);
  }
}

std::int64_t MemorySystem::read(Addr addr) const {
  auto it = data_.find(addr);
  return it == data_.end() ? 0 : it->second;
}

void MemorySystem::write(Addr addr, std::int64_t value) { data_[addr] = value; }

}  // namespace transim

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "common.hpp"
#include "profile.hpp"

namespace transim {

// 2-bit saturating counters indexed by low PC bits; 0 = strong not-taken.
class Pht {
 public:
  static constexpr unsigned kIndexBits = 6;
  static constexpr unsigned kEntries = 1u << kIndexBits;

  bool predict(Addr pc) const { return counters_[index(pc)] >= 2; }
  std::uint8_t counter(Addr pc) const { return counters_[index(pc)]; }
  void update(Addr pc, bool taken);

 private:
  static unsigned index(Addr pc) { return static_cast<unsigned>(pc & (kEntries - 1)); }
  std::array<std::uint8_t, kEntries> counters_{};
};

// Last-target map keyed by call/return site.
class Btb {
 public:
  std::optional<Addr> lookup(Addr pc) const;
  void update(Addr pc, Addr target) { targets_[pc] = target; }
  void clear() { targets_.clear(); }
  std::size_t size() const { return targets_.size(); }

 private:
  std::map<Addr, Addr> targets_;
};

class Rsb {
 public:
  explicit Rsb(unsigned size);

  unsigned size() const { return static_cast<unsigned>(entries_.size()); }
  unsigned count() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::optional<Addr> top() const;

  // At capacity the oldest entry is overwritten.
  void push(Addr return_addr);
  // Non-empty: pops the top. Empty: applies the underflow policy; the BTB is
  // consulted only for switch-to-btb.
  std::optional<Addr> pop(const Btb& btb, Addr ret_site_pc, RsbUnderflow policy);

  void flush();
  void fill(Addr addr);  // every slot = addr, count = size
  // Entries from top (most recent) to bottom, valid ones only.
  std::vector<Addr> snapshot() const;

 private:
  std::vector<std::optional<Addr>> entries_;
  unsigned top_ = 0;  // slot of the most recent push
  unsigned count_ = 0;
};

}  // namespace transim

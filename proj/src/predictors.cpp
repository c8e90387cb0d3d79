#include "predictors.hpp"

namespace transim {

void Pht::update(Addr pc, bool taken) {
  auto& c = counters_[index(pc)];
  if (taken && c < 3) ++c;
  if (!taken && c > 0) --c;
}

std::optional<Addr> Btb::lookup(Addr pc) const {
  auto it = targets_.find(pc);
  if (it == targets_.end()) return std::nullopt;
  return it->second;
}

Rsb::Rsb(unsigned size) : entries_(size) {
  if (size == 0) throw Error(ErrorCode::Config, "rsb size must be positive");
  top_ = size - 1;
}

std::optional<Addr> Rsb::top() const {
  if (count_ == 0) return std::nullopt;
  return entries_[top_];
}

void Rsb::push(Addr return_addr) {
  top_ = (top_ + 1) % size();
  entries_[top_] = return_addr;
  if (count_ < size()) ++count_;
}

std::optional<Addr> Rsb::pop(const Btb& btb, Addr ret_site_pc, RsbUnderflow policy) {
  if (count_ > 0) {
    auto v = entries_[top_];
    top_ = (top_ + size() - 1) % size();
    --count_;
    return v;
  }
  switch (policy) {
    case RsbUnderflow::StopPredicting:
      return std::nullopt;
    case RsbUnderflow::RingBuffer: {
      auto v = entries_[top_];
      top_ = (top_ + size() - 1) % size();
      return v;
    }
    case RsbUnderflow::SwitchToBtb:
      return btb.lookup(ret_site_pc);
  }
  return std::nullopt;
}

void Rsb::flush() {
  for (auto& e : entries_) e.reset();
  count_ = 0;
}

void Rsb::fill(Addr addr) {
  for (auto& e : entries_) e = addr;
  count_ = size();
}

std::vector<Addr> Rsb::snapshot() const {
  std::vector<Addr> out;
  unsigned slot = top_;
  for (unsigned i = 0; i < count_; ++i) {
    if (entries_[slot]) out.push_back(*entries_[slot]);
    slot = (slot + size() - 1) % size();
  }
  return out;
}

}  // namespace transim

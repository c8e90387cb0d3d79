#include "core.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

namespace transim {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Fetch: return "fetch";
    case EventKind::Execute: return "execute";
    case EventKind::Retire: return "retire";
    case EventKind::Squash: return "squash";
    case EventKind::Fill: return "fill";
    case EventKind::Fault: return "fault";
    case EventKind::Predict: return "predict";
  }
  return "?";
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Halted: return "halted";
    case RunStatus::Yielded: return "yielded";
    case RunStatus::CycleLimit: return "cycle-limit";
    case RunStatus::UnhandledFault: return "unhandled-fault";
    case RunStatus::InvalidPc: return "invalid-pc";
  }
  return "?";
}

std::size_t Trace::count(EventKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [kind](const TraceEvent& e) { return e.kind == kind; }));
}

std::string Trace::to_log() const {
  std::string out;
  for (const auto& e : events)
    out += fmt::format("{} {} #{} pc={}{} {}\n", e.cycle, to_string(e.kind), e.seq, e.pc, e.transient ? " T" : "",
                       e.detail);
  return out;
}

std::string Trace::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& e : events)
    arr.push_back({{"cycle", e.cycle},
                   {"kind", to_string(e.kind)},
                   {"seq", e.seq},
                   {"pc", e.pc},
                   {"transient", e.transient},
                   {"detail", e.detail}});
  return arr.dump();
}

Core::Core(const CpuProfile& profile, std::uint64_t seed)
    : profile_(profile), mem_(profile.memory_config(seed)), rsb_(profile.rsb_size) {
  profile_.check();
}

void Core::on_context_switch() {
  if (profile_.mitigations.rsb_flush_on_cs) rsb_.flush();
  if (profile_.mitigations.rsb_refill_on_cs) rsb_.fill(kBenignGadgetBase);
}

RsbUnderflow Core::effective_underflow() const {
  if (profile_.rsb_underflow == RsbUnderflow::SwitchToBtb && profile_.mitigations.btb_fallback_disabled)
    return RsbUnderflow::StopPredicting;
  return profile_.rsb_underflow;
}

namespace {

constexpr Cycle kNever = std::numeric_limits<Cycle>::max() / 4;
constexpr unsigned kMaxTransientInstrs = 4096;

const Instruction& benign_instruction(Addr offset) {
  static const Instruction nop{Opcode::NOP, {}, 0};
  static const Instruction halt{Opcode::HALT, {}, 0};
  return offset < kBenignGadgetNops ? nop : halt;
}

struct StoreEntry {
  Addr addr;
  Cycle addr_ready;
  std::int64_t data;
  Cycle data_ready;
  std::int64_t old_value;
  Cycle commit;
};

struct PathState {
  std::array<std::int64_t, kNumRegs> val{};
  std::array<Cycle, kNumRegs> ready{};
  bool ge = false;
  Cycle ge_ready = 0;
  Cycle next_fetch = 0;
  Cycle floor = 0;
  Cycle max_complete = 0;
  std::vector<StoreEntry> sq;
};

struct TransientFill {
  Addr line;
  Level level;
  Cycle complete;
  std::uint64_t seq;
  Addr pc;
};

struct MemRead {
  std::int64_t value = 0;
  Cycle issue = 0;
  Cycle complete = 0;
  bool privilege_fault = false;
  bool forwarded = false;
  // Youngest older store that was bypassed although it aliases.
  std::optional<StoreEntry> alias;
};

struct ExecResult {
  Cycle issue = 0;
  Cycle complete = 0;
  bool executed = true;
  std::optional<std::string> fault;
  std::optional<StoreEntry> alias;  // STL bypass that must be replayed
  int dest = -1;
  std::int64_t old_dest_value = 0;
  Cycle old_dest_ready = 0;
  bool is_store = false;
  Addr store_addr = 0;
  bool is_flush = false;
  Addr flush_addr = 0;
};

class Engine {
 public:
  Engine(Core& core, Context& ctx, const RunLimits& limits) : core_(core), ctx_(ctx), limits_(limits) {}

  RunResult run();

 private:
  const Instruction* fetch_instr(Addr pc) const {
    if (ctx_.program && ctx_.program->contains(pc)) return &ctx_.program->instructions[pc];
    if (pc >= kBenignGadgetBase && pc <= kBenignGadgetBase + kBenignGadgetNops)
      return &benign_instruction(pc - kBenignGadgetBase);
    return nullptr;
  }

  template <typename F>
  void emit(Cycle c, EventKind k, std::uint64_t seq, Addr pc, bool transient, F&& detail) {
    if (limits_.record_trace) result_.trace.events.push_back({c, k, seq, pc, transient, detail()});
  }

  Cycle issue_at(const PathState& st, Cycle fetch, Cycle operands) const {
    Cycle c = std::max({fetch, operands, st.floor});
    if (!core_.profile().out_of_order()) c = std::max(c, st.max_complete);
    return c;
  }

  static void write(PathState& st, Reg r, std::int64_t v, Cycle ready) {
    st.val[r.index] = v;
    st.ready[r.index] = ready;
  }

  static std::int64_t rhs(const PathState& st, const Instruction& in, std::size_t i, Cycle& ready) {
    const auto& op = in.operands.at(i);
    if (const auto* r = std::get_if<Reg>(&op)) {
      ready = std::max(ready, st.ready[r->index]);
      return st.val[r->index];
    }
    if (const auto* c = std::get_if<CodeRef>(&op)) return static_cast<std::int64_t>(c->target);
    return std::get<Imm>(op).value;
  }

  MemRead read_memory(PathState& st, Addr addr, Cycle issue, bool transient, std::uint64_t seq, Addr pc);
  Cycle cache_load(Addr addr, Cycle issue, bool transient, std::uint64_t seq, Addr pc, bool& privilege_fault,
                   std::int64_t& value);
  ExecResult execute(PathState& st, const Instruction& in, Addr pc, Cycle fetch, bool transient, Cycle deadline,
                     std::uint64_t seq);
  void transient_walk(PathState st, Addr pc, Cycle deadline);

  Core& core_;
  Context& ctx_;
  RunLimits limits_;
  RunResult result_;
  std::uint64_t seq_ = 0;
  std::vector<TransientFill> fills_;
};

// One cache access; returns completion cycle.
Cycle Engine::cache_load(Addr addr, Cycle issue, bool transient, std::uint64_t seq, Addr pc, bool& privilege_fault,
                         std::int64_t& value) {
  auto& mem = core_.mem();
  const auto& lat = mem.latencies();
  const auto& prof = core_.profile();
  privilege_fault = false;

  bool page_fault = !mem.page_table().lookup(addr).mapped;
  if (page_fault) {
    if (transient) {
      value = 0;
      return issue + lat.page_fault;
    }
    mem.page_table().map(addr);
    emit(issue, EventKind::Fault, seq, pc, false, [&] { return fmt::format("page-fault addr=0x{:x} mapped", addr); });
  }

  AccessResult r = mem.access(addr, ctx_.privilege);
  Addr line = line_of(addr);
  auto& inflight = core_.inflight();
  Cycle complete = issue + (page_fault ? lat.page_fault : r.latency);
  if (r.level == Level::L1) {
    auto it = inflight.find(line);
    if (it != inflight.end()) {
      if (it->second > issue)
        complete = std::max(complete, it->second);
      else
        inflight.erase(it);
    }
  } else {
    inflight[line] = complete;
    emit(issue, EventKind::Fill, seq, pc, transient,
         [&] { return fmt::format("line=0x{:x} from={}", line, level_name(r.level)); });
    if (transient) fills_.push_back({line, r.level, complete, seq, pc});
  }

  value = r.value;
  if (r.fault == MemFault::PrivilegeFault) {
    privilege_fault = true;
    if (prof.exception_policy == ExceptionPolicy::DeferredForwardZero) value = 0;
  }
  return complete;
}

MemRead Engine::read_memory(PathState& st, Addr addr, Cycle issue, bool transient, std::uint64_t seq, Addr pc) {
  const bool stl = core_.profile().stl_speculation;
  MemRead out;
  const StoreEntry* forward = nullptr;
  const StoreEntry* alias = nullptr;

  for (bool rescan = true; rescan;) {
    rescan = false;
    forward = nullptr;
    alias = nullptr;
    for (auto i = st.sq.size(); i-- > 0;) {
      const auto& s = st.sq[i];
      if (s.commit <= issue) continue;
      if (s.addr_ready <= issue) {
        if (s.addr == addr) {
          forward = &s;
          break;
        }
        continue;
      }
      if (!stl) {
        issue = s.addr_ready;
        rescan = true;
        break;
      }
      if (s.addr == addr && !alias) alias = &s;
    }
  }
  out.issue = issue;

  if (forward && !alias) {
    out.forwarded = true;
    out.value = forward->data;
    out.complete = std::max(issue, forward->data_ready) + 1;
    return out;
  }

  std::int64_t value = 0;
  out.complete = cache_load(addr, issue, transient, seq, pc, out.privilege_fault, value);
  out.value = value;
  if (alias) {
    if (forward) {
      out.value = forward->data;
      out.complete = std::max(issue, forward->data_ready) + 1;
    } else if (!transient) {
      out.value = alias->old_value;
    }
    if (!transient) out.alias = *alias;
  }
  return out;
}

ExecResult Engine::execute(PathState& st, const Instruction& in, Addr pc, Cycle fetch, bool transient,
                           Cycle deadline, std::uint64_t seq) {
  ExecResult r;
  auto& mem = core_.mem();
  auto user = ctx_.privilege == Privilege::User;
  auto skip_dest = [&](Reg d) {
    r.executed = false;
    write(st, d, 0, kNever);
  };
  auto set_dest = [&](Reg d, std::int64_t v, Cycle ready) {
    r.dest = d.index;
    r.old_dest_value = st.val[d.index];
    r.old_dest_ready = st.ready[d.index];
    write(st, d, v, ready);
  };

  switch (in.opcode) {
    case Opcode::NOP:
    case Opcode::HALT:
    case Opcode::YIELD:
      r.issue = issue_at(st, fetch, fetch);
      r.complete = r.issue + 1;
      break;

    case Opcode::MOVI: {
      Cycle ready = fetch;
      auto v = rhs(st, in, 1, ready);
      r.issue = issue_at(st, fetch, ready);
      r.complete = r.issue + 1;
      if (transient && r.issue >= deadline) {
        skip_dest(in.reg(0));
        break;
      }
      set_dest(in.reg(0), v, r.complete);
      break;
    }

    case Opcode::ADD:
    case Opcode::SHL:
    case Opcode::AND: {
      Cycle ready = fetch;
      auto a = rhs(st, in, 1, ready);
      auto b = rhs(st, in, 2, ready);
      r.issue = issue_at(st, fetch, ready);
      r.complete = r.issue + 1;
      if (transient && r.issue >= deadline) {
        skip_dest(in.reg(0));
        break;
      }
      std::int64_t v = 0;
      if (in.opcode == Opcode::ADD)
        v = static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
      else if (in.opcode == Opcode::SHL)
        v = static_cast<std::int64_t>(static_cast<std::uint64_t>(a) << (b & 63));
      else
        v = a & b;
      set_dest(in.reg(0), v, r.complete);
      break;
    }

    case Opcode::CMP: {
      Cycle ready = fetch;
      auto a = rhs(st, in, 0, ready);
      auto b = rhs(st, in, 1, ready);
      r.issue = issue_at(st, fetch, ready);
      r.complete = r.issue + 1;
      if (transient && r.issue >= deadline) {
        r.executed = false;
        st.ge_ready = kNever;
        break;
      }
      st.ge = a >= b;
      st.ge_ready = r.complete;
      break;
    }

    case Opcode::LD: {
      Cycle ready = fetch;
      auto base = rhs(st, in, 1, ready);
      auto addr = static_cast<Addr>(base + in.imm(2));
      Cycle issue = issue_at(st, fetch, ready);
      if (transient && issue >= deadline) {
        r.issue = issue;
        r.complete = kNever;
        skip_dest(in.reg(0));
        break;
      }
      auto m = read_memory(st, addr, issue, transient, seq, pc);
      r.issue = m.issue;
      r.complete = m.complete;
      if (transient && r.issue >= deadline) {
        skip_dest(in.reg(0));
        break;
      }
      if (m.privilege_fault && !transient) r.fault = fmt::format("privilege fault on load of 0x{:x}", addr);
      r.alias = m.alias;
      set_dest(in.reg(0), m.value, m.complete);
      break;
    }

    case Opcode::ST: {
      Cycle addr_ready = fetch;
      auto base = rhs(st, in, 1, addr_ready);
      auto addr = static_cast<Addr>(base + in.imm(2));
      Cycle data_ready = fetch;
      auto data = rhs(st, in, 0, data_ready);
      r.issue = issue_at(st, fetch, std::min(addr_ready, data_ready));
      addr_ready = std::max(addr_ready, r.issue);
      data_ready = std::max(data_ready, r.issue);
      r.complete = std::max(addr_ready, data_ready) + 1;
      if (transient && r.issue >= deadline) {
        r.executed = false;
        st.sq.push_back({addr, kNever, data, kNever, 0, kNever});
        break;
      }
      if (transient) {
        st.sq.push_back({addr, addr_ready + 1, data, data_ready, mem.read(addr), kNever});
        break;
      }
      auto page = mem.page_table().lookup(addr);
      if (!page.mapped) mem.page_table().map(addr);
      if (page.privileged && user) {
        r.fault = fmt::format("privilege fault on store to 0x{:x}", addr);
        break;
      }
      st.sq.push_back({addr, addr_ready + 1, data, data_ready, mem.read(addr), kNever});
      mem.write(addr, data);
      r.is_store = true;
      r.store_addr = addr;
      break;
    }

    case Opcode::FLUSH: {
      Cycle ready = fetch;
      auto base = rhs(st, in, 0, ready);
      r.issue = issue_at(st, fetch, ready);
      r.complete = r.issue + 1;
      if (transient) {
        r.executed = r.issue < deadline;
        break;
      }
      r.is_flush = true;
      r.flush_addr = static_cast<Addr>(base + in.imm(1));
      if (core_.profile().mitigations.privileged_flush && user) r.fault = "privileged flush from user mode";
      break;
    }

    case Opcode::RDCYC: {
      r.issue = issue_at(st, fetch, fetch);
      r.complete = r.issue + 1;
      if (transient && r.issue >= deadline) {
        skip_dest(in.reg(0));
        break;
      }
      set_dest(in.reg(0), mem.counter().read_at(r.issue), r.complete);
      break;
    }

    case Opcode::MRS: {
      r.issue = issue_at(st, fetch, fetch);
      r.complete = r.issue + 1;
      if (transient && r.issue >= deadline) {
        skip_dest(in.reg(0));
        break;
      }
      auto id = std::get<SysReg>(in.operands.at(1)).id;
      auto it = ctx_.sysregs.find(id);
      std::int64_t v = it == ctx_.sysregs.end() ? 0 : it->second;
      if (user) {
        if (!core_.profile().sysreg_transient_forward) v = 0;
        if (!transient) r.fault = fmt::format("MRS s{} from user mode", id);
      }
      set_dest(in.reg(0), v, r.complete);
      break;
    }

    case Opcode::FENCE: {
      r.issue = std::max({fetch, st.floor, st.max_complete});
      r.complete = r.issue + 1;
      st.floor = r.complete;
      break;
    }

    case Opcode::BGE:
    case Opcode::CALL:
    case Opcode::RET:
      throw Error(ErrorCode::Internal, "control transfer routed to execute()");
  }

  if (r.executed && r.complete < kNever) st.max_complete = std::max(st.max_complete, r.complete);
  if (r.executed)
    emit(r.issue, EventKind::Execute, seq, pc, transient,
         [&] { return fmt::format("{} issue={} complete={}", mnemonic(in.opcode), r.issue, r.complete); });
  return r;
}

void Engine::transient_walk(PathState st, Addr pc, Cycle deadline) {
  fills_.clear();
  std::vector<std::pair<std::uint64_t, Addr>> fetched;
  const int sp = kStackReg;
  auto& rsb = core_.rsb();

  for (unsigned n = 0; n < kMaxTransientInstrs; ++n) {
    Cycle fetch = st.next_fetch;
    if (fetch >= deadline) break;
    const Instruction* in = fetch_instr(pc);
    if (!in) break;
    st.next_fetch = fetch + 1;
    auto seq = ++seq_;
    fetched.emplace_back(seq, pc);
    emit(fetch, EventKind::Fetch, seq, pc, true, [&] { return std::string(mnemonic(in->opcode)); });

    bool stop = false;
    switch (in->opcode) {
      case Opcode::HALT:
      case Opcode::YIELD:
        stop = true;
        break;
      case Opcode::BGE: {
        bool taken = core_.pht().predict(pc);
        emit(fetch, EventKind::Predict, seq, pc, true, [&] { return std::string(taken ? "taken" : "not-taken"); });
        pc = taken ? in->code_target(0) : pc + 1;
        continue;
      }
      case Opcode::CALL: {
        rsb.push(pc + 1);
        Cycle issue = issue_at(st, fetch, st.ready[sp]);
        auto new_sp = st.val[sp] - 8;
        if (issue < deadline) {
          st.val[sp] = new_sp;
          st.ready[sp] = issue + 1;
          st.sq.push_back({static_cast<Addr>(new_sp), issue + 1, static_cast<std::int64_t>(pc + 1), issue,
                           core_.mem().read(static_cast<Addr>(new_sp)), kNever});
        } else {
          st.ready[sp] = kNever;
        }
        pc = in->code_target(0);
        continue;
      }
      case Opcode::RET: {
        auto pred = rsb.pop(core_.btb(), pc, core_.effective_underflow());
        emit(fetch, EventKind::Predict, seq, pc, true,
             [&] { return pred ? fmt::format("target={}", *pred) : std::string("none"); });
        if (!pred) {
          stop = true;
          break;
        }
        st.val[sp] += 8;
        pc = *pred;
        continue;
      }
      default: {
        execute(st, *in, pc, fetch, true, deadline, seq);
        break;
      }
    }
    if (stop) break;
    ++pc;
  }

  for (const auto& [seq, fpc] : fetched) {
    emit(deadline, EventKind::Squash, seq, fpc, true, [] { return std::string(); });
    ++result_.squashed;
  }

  bool cancel = core_.profile().squash_policy == SquashPolicy::CancelInflightFills;
  for (const auto& f : fills_) {
    if (cancel && f.complete > deadline) {
      core_.mem().cancel_fill(f.line, f.level);
      core_.inflight().erase(f.line);
      emit(deadline, EventKind::Squash, f.seq, f.pc, true,
           [&] { return fmt::format("cancel-fill line=0x{:x}", f.line); });
    } else {
      result_.trace.transient_set.insert(f.line);
    }
  }
  fills_.clear();
}

RunResult Engine::run() {
  const Cycle start = core_.now();
  const auto& prof = core_.profile();
  const bool ooo = prof.out_of_order();
  const int sp = kStackReg;
  result_.start = start;

  PathState st;
  st.val = ctx_.regs;
  st.ready.fill(start);
  st.ge = ctx_.flag_ge;
  st.ge_ready = start;
  st.next_fetch = start;
  st.floor = start;
  st.max_complete = start;

  Cycle prev_retire = start;
  Addr pc = ctx_.pc;
  RunStatus status = RunStatus::Halted;

  auto retire_at = [&](Cycle complete) { return std::max(complete, prev_retire + 1); };
  auto retire = [&](std::uint64_t seq, Addr rpc, const Instruction& in, Cycle c) {
    prev_retire = c;
    ++result_.retired;
    emit(c, EventKind::Retire, seq, rpc, false, [&] { return std::string(mnemonic(in.opcode)); });
  };

  while (true) {
    Cycle fetch = st.next_fetch;
    if (fetch - start > limits_.max_cycles) {
      status = RunStatus::CycleLimit;
      break;
    }
    const Instruction* in = fetch_instr(pc);
    auto seq = ++seq_;
    if (!in) {
      emit(fetch, EventKind::Fault, seq, pc, false, [&] { return fmt::format("invalid pc {}", pc); });
      result_.fault = fmt::format("invalid pc {}", pc);
      status = RunStatus::InvalidPc;
      prev_retire = std::max(prev_retire, fetch);
      break;
    }
    st.next_fetch = fetch + 1;
    emit(fetch, EventKind::Fetch, seq, pc, false, [&] { return std::string(mnemonic(in->opcode)); });

    if (in->opcode == Opcode::BGE) {
      bool predicted_taken = core_.pht().predict(pc);
      emit(fetch, EventKind::Predict, seq, pc, false,
           [&] { return std::string(predicted_taken ? "taken" : "not-taken"); });
      Cycle issue = issue_at(st, fetch, st.ge_ready);
      Cycle resolve = issue + std::max<Cycle>(1, prof.branch_resolve_extra);
      bool taken = st.ge;
      Addr actual = taken ? in->code_target(0) : pc + 1;
      Addr predicted = predicted_taken ? in->code_target(0) : pc + 1;
      st.max_complete = std::max(st.max_complete, resolve);
      emit(issue, EventKind::Execute, seq, pc, false,
           [&] { return fmt::format("BGE issue={} resolve={} taken={}", issue, resolve, taken); });
      if (predicted != actual) {
        ++result_.mispredicts;
        if (ooo) transient_walk(st, predicted, resolve);
        st.next_fetch = std::max(st.next_fetch, resolve + 1);
      }
      core_.pht().update(pc, taken);
      retire(seq, pc, *in, retire_at(resolve));
      pc = actual;
      continue;
    }

    if (in->opcode == Opcode::CALL) {
      Addr ret_addr = pc + 1;
      core_.rsb().push(ret_addr);
      Cycle issue = issue_at(st, fetch, st.ready[sp]);
      auto new_sp = static_cast<Addr>(st.val[sp] - 8);
      auto& mem = core_.mem();
      if (!mem.page_table().lookup(new_sp).mapped) mem.page_table().map(new_sp);
      st.sq.push_back({new_sp, issue + 1, static_cast<std::int64_t>(ret_addr), issue, mem.read(new_sp), kNever});
      mem.write(new_sp, static_cast<std::int64_t>(ret_addr));
      write(st, Reg{static_cast<std::uint8_t>(sp)}, static_cast<std::int64_t>(new_sp), issue + 1);
      Cycle complete = issue + 2;
      st.max_complete = std::max(st.max_complete, complete);
      emit(issue, EventKind::Execute, seq, pc, false,
           [&] { return fmt::format("CALL issue={} push={}", issue, ret_addr); });
      Cycle r = retire_at(complete);
      st.sq.back().commit = r;
      mem.allocate(new_sp);
      core_.btb().update(pc, in->code_target(0));
      retire(seq, pc, *in, r);
      pc = in->code_target(0);
      continue;
    }

    if (in->opcode == Opcode::RET) {
      auto pred = core_.rsb().pop(core_.btb(), pc, core_.effective_underflow());
      emit(fetch, EventKind::Predict, seq, pc, false,
           [&] { return pred ? fmt::format("target={}", *pred) : std::string("none"); });
      Cycle issue = issue_at(st, fetch, st.ready[sp]);
      auto addr = static_cast<Addr>(st.val[sp]);
      auto m = read_memory(st, addr, issue, false, seq, pc);
      Cycle complete = m.complete;
      if (m.alias) complete = std::max(complete, std::max(m.alias->addr_ready, m.alias->data_ready) + 1);
      auto target = static_cast<Addr>(core_.mem().read(addr));
      write(st, Reg{static_cast<std::uint8_t>(sp)}, st.val[sp] + 8, m.issue + 1);
      Cycle resolve = complete + prof.return_resolve_extra;
      st.max_complete = std::max(st.max_complete, resolve);
      emit(m.issue, EventKind::Execute, seq, pc, false,
           [&] { return fmt::format("RET issue={} resolve={} target={}", m.issue, resolve, target); });
      if (!pred) {
        st.next_fetch = std::max(st.next_fetch, resolve + 1);
      } else if (*pred != target) {
        ++result_.mispredicts;
        if (ooo) transient_walk(st, *pred, resolve);
        st.next_fetch = std::max(st.next_fetch, resolve + 1);
      }
      core_.btb().update(pc, target);
      retire(seq, pc, *in, retire_at(resolve));
      pc = target;
      continue;
    }

    auto r = execute(st, *in, pc, fetch, false, kNever, seq);

    if (r.alias) {
      // Store-to-load bypass hit an aliasing store: run the younger path on
      // the stale value until the store address resolves, then replay.
      ++result_.mispredicts;
      Cycle resolve = r.alias->addr_ready;
      if (ooo) transient_walk(st, pc + 1, resolve);
      auto& mem = core_.mem();
      auto addr = r.alias->addr;
      Cycle complete = std::max(resolve, r.alias->data_ready) + 1;
      write(st, in->reg(0), mem.read(addr), complete);
      r.complete = complete;
      st.max_complete = std::max(st.max_complete, complete);
      st.next_fetch = std::max(st.next_fetch, resolve + 1);
      emit(resolve, EventKind::Execute, seq, pc, false,
           [&] { return fmt::format("LD replay complete={}", complete); });
    }

    Cycle rc = retire_at(r.complete);

    if (r.fault) {
      emit(rc, EventKind::Fault, seq, pc, false, [&] { return *r.fault; });
      if (ooo) transient_walk(st, pc + 1, rc);
      if (r.dest >= 0) {
        st.val[r.dest] = r.old_dest_value;
        st.ready[r.dest] = r.old_dest_ready;
      }
      prev_retire = rc;
      if (!ctx_.recovery_pc) {
        result_.fault = *r.fault;
        status = RunStatus::UnhandledFault;
        break;
      }
      pc = *ctx_.recovery_pc;
      st.next_fetch = std::max(st.next_fetch, rc + 1);
      continue;
    }

    if (r.is_store) {
      st.sq.back().commit = rc;
      core_.mem().allocate(r.store_addr);
    }
    if (r.is_flush) {
      core_.mem().flush_line(r.flush_addr, ctx_.privilege, false);
      core_.inflight().erase(line_of(r.flush_addr));
    }
    retire(seq, pc, *in, rc);

    if (in->opcode == Opcode::HALT) {
      status = RunStatus::Halted;
      break;
    }
    if (in->opcode == Opcode::YIELD) {
      status = RunStatus::Yielded;
      ++pc;
      break;
    }
    ++pc;
  }

  ctx_.regs = st.val;
  ctx_.flag_ge = st.ge;
  ctx_.pc = pc;
  result_.status = status;
  result_.end = std::max(prev_retire, start);
  core_.mem().counter().advance_to(result_.end);
  auto& inflight = core_.inflight();
  for (auto it = inflight.begin(); it != inflight.end();)
    it = it->second <= result_.end ? inflight.erase(it) : std::next(it);
  return std::move(result_);
}

}  // namespace

RunResult run(Core& core, Context& ctx, const RunLimits& limits) {
  if (limits.max_cycles <= 0) throw Error(ErrorCode::InvalidArgument, "max_cycles must be positive");
  Engine engine(core, ctx, limits);
  return engine.run();
}

}  // namespace transim

#include "isa.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <set>

#include <fmt/format.h>

namespace transim {

namespace {

constexpr std::array<std::pair<Opcode, std::string_view>, 17> kMnemonics{{
    {Opcode::MOVI, "MOVI"}, {Opcode::LD, "LD"},       {Opcode::ST, "ST"},
    {Opcode::ADD, "ADD"},   {Opcode::SHL, "SHL"},     {Opcode::AND, "AND"},
    {Opcode::CMP, "CMP"},   {Opcode::BGE, "BGE"},     {Opcode::CALL, "CALL"},
    {Opcode::RET, "RET"},   {Opcode::FLUSH, "FLUSH"}, {Opcode::RDCYC, "RDCYC"},
    {Opcode::MRS, "MRS"},   {Opcode::YIELD, "YIELD"}, {Opcode::FENCE, "FENCE"},
    {Opcode::HALT, "HALT"}, {Opcode::NOP, "NOP"},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

bool is_identifier(std::string_view s) {
  return !s.empty() && is_ident_start(s.front()) && std::all_of(s.begin(), s.end(), is_ident_char);
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

// Operand kinds the assembler accepts in a given slot.
enum class Slot { Reg, RegOrImm, ImmOrLabel, Label, Mem, Sys };

struct LineParser {
  int line;
  const std::map<std::string, Addr>& labels;

  [[noreturn]] void fail(const std::string& msg) const { throw AssemblyError(line, msg); }

  std::optional<Reg> try_reg(std::string_view tok) const {
    std::string u = upper(tok);
    if (u == "SP") return Reg{kStackReg};
    if (u.size() < 2 || u[0] != 'R') return std::nullopt;
    if (!std::all_of(u.begin() + 1, u.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      return std::nullopt;
    unsigned idx = 0;
    auto [p, ec] = std::from_chars(u.data() + 1, u.data() + u.size(), idx);
    if (ec != std::errc{} || idx >= static_cast<unsigned>(kNumRegs))
      fail(fmt::format("register index out of range: {}", tok));
    return Reg{static_cast<std::uint8_t>(idx)};
  }

  Reg reg(std::string_view tok) const {
    if (auto r = try_reg(tok)) return *r;
    fail(fmt::format("expected register, got '{}'", tok));
  }

  static bool looks_numeric(std::string_view tok) {
    return !tok.empty() && (std::isdigit(static_cast<unsigned char>(tok.front())) || tok.front() == '-' ||
                            tok.front() == '+');
  }

  std::int64_t immediate(std::string_view tok) const {
    std::string_view s = tok;
    bool negative = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
      negative = s.front() == '-';
      s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      base = 16;
      s.remove_prefix(2);
    }
    std::uint64_t magnitude = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), magnitude, base);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
      fail(fmt::format("malformed immediate: {}", tok));
    return negative ? -static_cast<std::int64_t>(magnitude) : static_cast<std::int64_t>(magnitude);
  }

  Addr code_ref(std::string_view tok) const {
    if (!tok.empty() && tok.front() == '@') {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(tok.data() + 1, tok.data() + tok.size(), v);
      if (ec != std::errc{} || p != tok.data() + tok.size()) fail(fmt::format("malformed code address: {}", tok));
      return v;
    }
    if (!is_identifier(tok)) fail(fmt::format("expected label, got '{}'", tok));
    auto it = labels.find(std::string(tok));
    if (it == labels.end()) fail(fmt::format("undefined label: {}", tok));
    return it->second;
  }

  void mem(std::string_view tok, std::vector<Operand>& out) const {
    if (tok.size() < 3 || tok.front() != '[' || tok.back() != ']')
      fail(fmt::format("expected memory operand [rN+off], got '{}'", tok));
    std::string_view inner = trim(tok.substr(1, tok.size() - 2));
    auto split = inner.find_first_of("+-");
    std::string_view base = trim(inner.substr(0, split));
    std::int64_t offset = 0;
    if (split != std::string_view::npos) {
      std::string_view off = trim(inner.substr(split + 1));
      offset = immediate(off);
      if (inner[split] == '-') offset = -offset;
    }
    out.emplace_back(reg(base));
    out.emplace_back(Imm{offset});
  }

  void operand(Slot slot, std::string_view tok, std::vector<Operand>& out) const {
    switch (slot) {
      case Slot::Reg:
        out.emplace_back(reg(tok));
        return;
      case Slot::RegOrImm:
        if (auto r = try_reg(tok)) {
          out.emplace_back(*r);
        } else {
          out.emplace_back(Imm{immediate(tok)});
        }
        return;
      case Slot::ImmOrLabel:
        if (looks_numeric(tok)) {
          out.emplace_back(Imm{immediate(tok)});
        } else {
          out.emplace_back(CodeRef{code_ref(tok)});
        }
        return;
      case Slot::Label:
        out.emplace_back(CodeRef{code_ref(tok)});
        return;
      case Slot::Mem:
        mem(tok, out);
        return;
      case Slot::Sys: {
        if (tok.size() < 2 || (tok[0] != 's' && tok[0] != 'S')) fail(fmt::format("expected system register sN, got '{}'", tok));
        std::uint32_t id = 0;
        auto [p, ec] = std::from_chars(tok.data() + 1, tok.data() + tok.size(), id);
        if (ec != std::errc{} || p != tok.data() + tok.size()) fail(fmt::format("malformed system register: {}", tok));
        out.emplace_back(SysReg{id});
        return;
      }
    }
  }
};

std::vector<Slot> slots_for(Opcode op) {
  switch (op) {
    case Opcode::MOVI: return {Slot::Reg, Slot::ImmOrLabel};
    case Opcode::LD:
    case Opcode::ST: return {Slot::Reg, Slot::Mem};
    case Opcode::ADD:
    case Opcode::SHL:
    case Opcode::AND: return {Slot::Reg, Slot::Reg, Slot::RegOrImm};
    case Opcode::CMP: return {Slot::Reg, Slot::RegOrImm};
    case Opcode::BGE:
    case Opcode::CALL: return {Slot::Label};
    case Opcode::FLUSH: return {Slot::Mem};
    case Opcode::RDCYC: return {Slot::Reg};
    case Opcode::MRS: return {Slot::Reg, Slot::Sys};
    default: return {};
  }
}

struct SourceLine {
  int number;
  std::vector<std::string> labels;
  std::string_view body;  // instruction text or directive, trimmed
};

}  // namespace

std::string_view mnemonic(Opcode op) {
  for (auto& [o, name] : kMnemonics)
    if (o == op) return name;
  return "?";
}

std::optional<Opcode> parse_mnemonic(std::string_view text) {
  std::string u = upper(text);
  for (auto& [o, name] : kMnemonics)
    if (name == u) return o;
  return std::nullopt;
}

Addr Program::label(const std::string& name) const {
  auto it = labels.find(name);
  if (it == labels.end()) throw Error(ErrorCode::InvalidArgument, "no such label: " + name);
  return it->second;
}

AssemblyError::AssemblyError(int line, const std::string& message)
    : Error(ErrorCode::Assembly, fmt::format("line {}: {}", line, message)), line_(line), message_(message) {}

Program assemble(std::string_view text) {
  // Pass 1: split lines, collect labels against instruction indices.
  std::vector<SourceLine> lines;
  std::map<std::string, Addr> labels;
  std::optional<std::pair<int, std::string>> entry_directive;
  Addr next_index = 0;
  int number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++number;
    if (auto c = raw.find(';'); c != std::string_view::npos) raw = raw.substr(0, c);
    std::string_view rest = trim(raw);
    SourceLine sl{number, {}, {}};
    while (true) {
      auto colon = rest.find(':');
      if (colon == std::string_view::npos) break;
      std::string_view name = trim(rest.substr(0, colon));
      if (!is_identifier(name)) break;
      if (labels.count(std::string(name))) throw AssemblyError(number, fmt::format("duplicate label: {}", name));
      labels.emplace(std::string(name), next_index);
      sl.labels.emplace_back(name);
      rest = trim(rest.substr(colon + 1));
    }
    if (rest.empty()) continue;
    if (rest.starts_with(".entry")) {
      entry_directive.emplace(number, std::string(trim(rest.substr(6))));
      continue;
    }
    sl.body = rest;
    lines.push_back(sl);
    ++next_index;
  }

  Program program;
  program.labels = labels;
  program.instructions.reserve(lines.size());
  for (const auto& sl : lines) {
    LineParser parser{sl.number, labels};
    auto space = sl.body.find_first_of(" \t");
    std::string_view word = sl.body.substr(0, space);
    auto op = parse_mnemonic(word);
    if (!op) parser.fail(fmt::format("unknown mnemonic: {}", word));
    std::string_view rest = space == std::string_view::npos ? std::string_view{} : sl.body.substr(space);
    auto tokens = split_operands(rest);
    auto slots = slots_for(*op);
    if (tokens.size() != slots.size())
      parser.fail(fmt::format("{} expects {} operand(s), got {}", mnemonic(*op), slots.size(), tokens.size()));
    Instruction ins;
    ins.opcode = *op;
    ins.source_line = sl.number;
    for (std::size_t i = 0; i < slots.size(); ++i) parser.operand(slots[i], tokens[i], ins.operands);
    program.instructions.push_back(std::move(ins));
  }

  if (entry_directive) {
    LineParser parser{entry_directive->first, labels};
    program.entry = parser.code_ref(entry_directive->second);
  } else if (auto it = labels.find("entry"); it != labels.end()) {
    program.entry = it->second;
  }
  if (!program.instructions.empty() && program.entry >= program.size())
    throw AssemblyError(entry_directive ? entry_directive->first : 1, "entry point out of bounds");
  return program;
}

std::string disassemble(const Program& program) {
  std::multimap<Addr, std::string> by_addr;
  std::map<Addr, std::string> name_of;
  for (const auto& [name, addr] : program.labels) {
    by_addr.emplace(addr, name);
    name_of.emplace(addr, name);  // map order: lexicographically first name wins
  }
  auto ref = [&](Addr a) {
    auto it = name_of.find(a);
    return it != name_of.end() ? it->second : fmt::format("@{}", a);
  };
  auto op_text = [&](const Operand& o) -> std::string {
    return std::visit(
        [&](auto&& v) -> std::string {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Reg>) return fmt::format("r{}", v.index);
          if constexpr (std::is_same_v<T, Imm>) return fmt::format("{}", v.value);
          if constexpr (std::is_same_v<T, CodeRef>) return ref(v.target);
          if constexpr (std::is_same_v<T, SysReg>) return fmt::format("s{}", v.id);
        },
        o);
  };

  std::string out;
  bool has_entry_label = program.labels.count("entry") && program.labels.at("entry") == program.entry;
  if (program.entry != 0 && !has_entry_label) out += fmt::format(".entry {}\n", ref(program.entry));
  if (program.entry == 0 && program.labels.count("entry") && program.labels.at("entry") != 0)
    out += ".entry @0\n";

  for (Addr i = 0; i <= program.size(); ++i) {
    auto [lo, hi] = by_addr.equal_range(i);
    for (auto it = lo; it != hi; ++it) out += it->second + ":\n";
    if (i == program.size()) break;
    const auto& ins = program.instructions[i];
    out += "  ";
    out += mnemonic(ins.opcode);
    auto slots = slots_for(ins.opcode);
    std::size_t k = 0;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      out += s == 0 ? " " : ", ";
      if (slots[s] == Slot::Mem) {
        auto off = std::get<Imm>(ins.operands.at(k + 1)).value;
        out += fmt::format("[{}{}{}]", op_text(ins.operands.at(k)), off < 0 ? "-" : "+",
                           off < 0 ? -static_cast<std::uint64_t>(off) : static_cast<std::uint64_t>(off));
        k += 2;
      } else {
        out += op_text(ins.operands.at(k));
        ++k;
      }
    }
    out += "\n";
  }
  return out;
}

ValidationReport validate(const Program& program, const ValidateOptions& options) {
  ValidationReport report;
  const auto n = program.size();
  if (n == 0) return report;

  for (Addr pc = 0; pc < n; ++pc) {
    auto op = program.instructions[pc].opcode;
    if (op == Opcode::MRS || (op == Opcode::FLUSH && options.flush_is_privileged)) {
      report.privileged.push_back(pc);
      report.findings.push_back({ValidationFinding::Kind::PrivilegedOpcode, pc,
                                 fmt::format("{} at {} requires kernel privilege", mnemonic(op), pc)});
    }
  }

  // Successors within a function body: CALL falls through (the callee returns).
  auto successors = [&](Addr pc, std::vector<Addr>& out, std::vector<Addr>* callees) {
    const auto& ins = program.instructions[pc];
    switch (ins.opcode) {
      case Opcode::RET:
      case Opcode::HALT:
        return;
      case Opcode::BGE:
        out.push_back(ins.code_target(0));
        break;
      case Opcode::CALL:
        if (callees) callees->push_back(ins.code_target(0));
        else out.push_back(ins.code_target(0));
        break;
      default:
        break;
    }
    if (pc + 1 < n) out.push_back(pc + 1);
  };

  std::vector<bool> seen(n, false);
  std::vector<Addr> stack{program.entry};
  while (!stack.empty()) {
    Addr pc = stack.back();
    stack.pop_back();
    if (pc >= n || seen[pc]) continue;
    seen[pc] = true;
    successors(pc, stack, nullptr);
  }
  for (Addr pc = 0; pc < n; ++pc) {
    if (!seen[pc]) {
      report.unreachable.push_back(pc);
      report.findings.push_back({ValidationFinding::Kind::Unreachable, pc, fmt::format("instruction {} is unreachable", pc)});
    }
  }

  // Static call depth over the call graph rooted at the entry.
  std::map<Addr, std::vector<Addr>> callees_of;
  auto body_callees = [&](Addr fn) -> const std::vector<Addr>& {
    auto it = callees_of.find(fn);
    if (it != callees_of.end()) return it->second;
    std::vector<Addr> callees;
    std::vector<bool> visited(n, false);
    std::vector<Addr> work{fn};
    while (!work.empty()) {
      Addr pc = work.back();
      work.pop_back();
      if (pc >= n || visited[pc]) continue;
      visited[pc] = true;
      successors(pc, work, &callees);
    }
    std::sort(callees.begin(), callees.end());
    callees.erase(std::unique(callees.begin(), callees.end()), callees.end());
    return callees_of.emplace(fn, std::move(callees)).first->second;
  };
  std::map<Addr, unsigned> depth_memo;
  std::set<Addr> on_path;
  bool unbounded = false;
  std::function<unsigned(Addr)> depth = [&](Addr fn) -> unsigned {
    if (auto it = depth_memo.find(fn); it != depth_memo.end()) return it->second;
    if (on_path.count(fn)) {
      unbounded = true;
      return 0;
    }
    on_path.insert(fn);
    unsigned best = 0;
    for (Addr callee : body_callees(fn)) best = std::max(best, 1 + depth(callee));
    on_path.erase(fn);
    depth_memo[fn] = best;
    return best;
  };
  unsigned d = depth(program.entry);
  if (unbounded) {
    report.findings.push_back({ValidationFinding::Kind::UnboundedRecursion, program.entry,
                               "recursive call chain: RSB underflow/overflow possible"});
  } else {
    report.max_call_depth = d;
    if (d > options.rsb_size)
      report.findings.push_back({ValidationFinding::Kind::CallDepthExceedsRsb, program.entry,
                                 fmt::format("static call depth {} exceeds RSB capacity {}: underflow/overflow possible",
                                             d, options.rsb_size)});
  }

  bool terminates = std::any_of(program.instructions.begin(), program.instructions.end(), [](const Instruction& i) {
    return i.opcode == Opcode::HALT || i.opcode == Opcode::YIELD;
  });
  if (!terminates)
    report.findings.push_back({ValidationFinding::Kind::NoTermination, n - 1, "program has no HALT or YIELD"});
  return report;
}

}  // namespace transim

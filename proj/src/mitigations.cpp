#include "mitigations.hpp"

#include <fmt/format.h>
#include <json.hpp>

namespace transim {

using namespace layout;

std::string refill_bypass_source(unsigned rsb_size) {
  std::string src = R"(; attacker: route one return through victim_ret with the gadget on the stack
train:
  MOVI r7, gadget
  ADD r15, r15, -8
  ST r7, [r15+0]
  CMP r0, r0
  BGE victim_ret
victim:
)";
  for (unsigned i = 0; i < rsb_size; ++i) {
    src += fmt::format("  MOVI r7, drain_{}\n  ADD r15, r15, -8\n  ST r7, [r15+0]\n  RET\ndrain_{}:\n", i, i);
  }
  src += R"(  MOVI r7, done
  ADD r15, r15, -8
  ST r7, [r15+0]
  FLUSH [r15+0]
  FENCE
victim_ret:
  RET
gadget:
  LD r2, [r1+0]
  SHL r2, r2, 6
  ADD r2, r2, r3
  LD r4, [r2+0]
  HALT
done:
  HALT
)";
  return src;
}

AttackOutcome demo_refill_bypass(const CpuProfile& profile, const AttackOptions& options) {
  AttackOutcome out;
  out.variant = Variant::Rsb;
  out.profile = profile.name;
  out.expected = options.secret;
  try {
    Core core(profile, options.seed);
    auto& mem = core.mem();
    for (std::size_t i = 0; i < options.secret.size(); ++i) mem.write(kSecret + i, options.secret[i]);
    auto prog = std::make_shared<const Program>(assemble(refill_bypass_source(profile.rsb_size)));
    RunLimits limits;
    limits.record_trace = options.record_trace;
    const Cycle threshold = default_threshold(profile.latencies);

    for (std::size_t i = 0; i < options.secret.size(); ++i) {
      Context attacker(prog);
      attacker.pc = prog->label("train");
      attacker.regs[1] = static_cast<std::int64_t>(kArray1);
      attacker.regs[3] = static_cast<std::int64_t>(kOracle);
      attacker.regs[kStackReg] = static_cast<std::int64_t>(kStackTop - 0x10000);
      auto t = run(core, attacker, limits);
      out.squashes += t.squashed;

      auto probe = flush_reload(core, kOracle, kOracleLines, threshold, [&] {
        core.on_context_switch();
        mem.access(kSecret + i, Privilege::Kernel);
        Context victim(prog);
        victim.pc = prog->label("victim");
        victim.regs[1] = static_cast<std::int64_t>(kSecret + i);
        victim.regs[3] = static_cast<std::int64_t>(kOracle);
        victim.regs[kStackReg] = static_cast<std::int64_t>(kStackTop);
        auto r = run(core, victim, limits);
        out.squashes += r.squashed;
        out.mispredicts += r.mispredicts;
        out.transient_lines += r.trace.transient_set.size();
        if (limits.record_trace) out.trace = std::move(r.trace);
      });
      std::optional<std::uint8_t> got;
      auto hits = probe.hit_lines();
      if (hits.size() == 1) got = static_cast<std::uint8_t>(hits[0]);
      out.recovered.push_back(got);
      out.probe_latencies.push_back(probe.latencies);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::PrivilegedFlush) throw;
    out.error = e.what();
  }
  out.success = out.error.empty() && out.recovered.size() == out.expected.size();
  for (std::size_t i = 0; out.success && i < out.expected.size(); ++i)
    out.success = out.recovered[i] && *out.recovered[i] == out.expected[i];
  return out;
}

NoiseEffect pmu_noise_effect(const CpuProfile& profile, Cycle amplitude, unsigned trials, std::uint64_t seed) {
  if (trials < 100) throw Error(ErrorCode::InvalidArgument, "pmu_noise_effect needs at least 100 trials");
  if (amplitude < 0) throw Error(ErrorCode::InvalidArgument, "noise amplitude must be >= 0");
  MitigationSet m = profile.mitigations;
  m.pmu_noise_amplitude = amplitude;
  Core core(apply(profile, m), seed);
  auto& mem = core.mem();
  const auto& lat = profile.latencies;

  NoiseEffect out;
  out.amplitude = amplitude;
  out.trials = trials;
  out.threshold = (lat.l1 + lat.dram) / 2;
  unsigned correct = 0;
  const Addr line = kProbe;
  for (unsigned t = 0; t < trials; ++t) {
    bool want_hit = t % 2 == 0;
    if (want_hit)
      mem.access(line, Privilege::Kernel);
    else
      mem.flush_line(line, Privilege::Kernel, false);
    Cycle measured = mem.counter().measure(mem.latency_of(mem.probe(line)));
    if ((measured < out.threshold) == want_hit) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / trials;
  return out;
}

std::string_view to_string(DemoKind k) {
  switch (k) {
    case DemoKind::Suite: return "suite";
    case DemoKind::RefillBypass: return "refill-bypass";
    case DemoKind::PmuNoise: return "pmu-noise";
  }
  return "?";
}

DemoKind parse_demo(std::string_view s) {
  for (auto k : {DemoKind::Suite, DemoKind::RefillBypass, DemoKind::PmuNoise})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown mitigation demo: {}", s));
}

std::string MitigationReport::to_json() const {
  nlohmann::json j;
  j["profile"] = profile;
  j["demo"] = to_string(demo);
  j["mitigations"] = {{"privileged_flush", mitigations.privileged_flush},
                      {"pmu_noise_amplitude", mitigations.pmu_noise_amplitude},
                      {"rsb_flush_on_cs", mitigations.rsb_flush_on_cs},
                      {"rsb_refill_on_cs", mitigations.rsb_refill_on_cs},
                      {"btb_fallback_disabled", mitigations.btb_fallback_disabled}};
  auto rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"experiment", r.experiment}, {"baseline", r.baseline}, {"mitigated", r.mitigated}});
  j["rows"] = rows_json;
  if (noise)
    j["noise"] = {{"amplitude", noise->amplitude},
                  {"trials", noise->trials},
                  {"threshold", noise->threshold},
                  {"accuracy", noise->accuracy}};
  j["blocked"] = blocked;
  return j.dump();
}

MitigationReport run_mitigation_demo(DemoKind demo, const CpuProfile& profile, const MitigationSet& mitigations,
                                     std::uint64_t seed, unsigned noise_trials) {
  MitigationReport rep;
  rep.profile = profile.name;
  rep.mitigations = mitigations;
  rep.demo = demo;
  CpuProfile base = apply(profile, {});
  CpuProfile mitigated = apply(profile, mitigations);
  AttackOptions opts;
  opts.seed = seed;

  switch (demo) {
    case DemoKind::Suite: {
      const Scenario cm_l1{WindowTrigger::CacheMiss, SecretLocation::L1};
      auto attack_row = [&](const std::string& name, Variant v) {
        rep.rows.push_back({name, run_attack(v, base, cm_l1, opts).success,
                            run_attack(v, mitigated, cm_l1, opts).success});
      };
      attack_row("v1", Variant::V1);
      attack_row("rsb", Variant::Rsb);
      attack_row("v3", Variant::V3);
      attack_row("v3a", Variant::V3a);
      attack_row("v4", Variant::V4);
      ChannelConfig cfg;
      cfg.seed = seed;
      const std::vector<std::uint8_t> hi{0x48, 0x49};
      auto channel_ok = [&](const CpuProfile& p) {
        auto r = run_channel(hi, cfg, p);
        return !r.aborted && r.bit_errors == 0;
      };
      rep.rows.push_back({"covert", channel_ok(base), channel_ok(mitigated)});
      break;
    }
    case DemoKind::RefillBypass: {
      MitigationSet refill_only;
      refill_only.rsb_refill_on_cs = true;
      rep.rows.push_back({"refill-bypass", demo_refill_bypass(apply(profile, refill_only), opts).success,
                          demo_refill_bypass(mitigated, opts).success});
      break;
    }
    case DemoKind::PmuNoise: {
      auto clean = pmu_noise_effect(profile, 0, noise_trials, seed);
      auto noisy = pmu_noise_effect(profile, mitigations.pmu_noise_amplitude, noise_trials, seed);
      rep.noise = noisy;
      rep.rows.push_back({"pmu-classifier", clean.accuracy == 1.0, noisy.accuracy == 1.0});
      break;
    }
  }
  rep.blocked = true;
  for (const auto& r : rep.rows) rep.blocked = rep.blocked && !r.mitigated;
  return rep;
}

}  // namespace transim

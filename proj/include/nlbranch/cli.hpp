#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlbranch/classify.hpp"
#include "nlbranch/io.hpp"
#include "nlbranch/model.hpp"
#include "nlbranch/oracle.hpp"
#include "nlbranch/simulator.hpp"

namespace nlbranch {

/// Exit status taxonomy: the three honest failure modes of this artifact
/// are kept apart from ordinary success.
enum ExitStatus : int {
  kExitOk = 0,
  kExitInvalidModel = 1,
  kExitInconclusive = 2,
  kExitUnstableTruncation = 3,
};

struct RunConfig {
  std::string model_path;
  std::string command;  // validate|classify|simulate|hitting|stationary|bounds|crosscheck
  int truncation = 128;
  std::uint64_t seed = 0;
  std::uint64_t replicas = 10'000;
  double horizon = 100.0;
  std::uint64_t state_cap = 1'000'000;
  std::uint64_t jump_cap = 10'000'000;
  double tol = 1e-8;
  std::uint64_t x0 = 5;           // initial state for path commands
  std::string out_path;           // empty: stdout
  std::string format = "json";    // json|csv

  void validate() const {
    if (command.empty()) throw std::invalid_argument("config: command required");
    if (model_path.empty()) throw std::invalid_argument("config: model required");
    if (truncation < 2) throw std::invalid_argument("config: truncation must be >= 2");
    if (!(horizon > 0.0)) throw std::invalid_argument("config: horizon must be > 0");
    if (replicas == 0 || state_cap == 0 || jump_cap == 0)
      throw std::invalid_argument("config: replicas and caps must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("config: tol must be > 0");
    if (format != "json" && format != "csv")
      throw std::invalid_argument("config: format must be json or csv");
  }

  json to_json() const {
    return {{"model", model_path},   {"command", command},
            {"truncation", truncation}, {"seed", seed},
            {"replicas", replicas},  {"horizon", horizon},
            {"state_cap", state_cap}, {"jump_cap", jump_cap},
            {"tol", tol},            {"x0", x0},
            {"format", format}};
  }
};

namespace cli_detail {

struct Emitter {
  const RunConfig& config;
  std::string model_hash;

  void write(const std::string& body) const {
    if (config.out_path.empty()) {
      std::cout << body;
      if (!body.empty() && body.back() != '\n') std::cout << '\n';
    } else {
      std::ofstream out(config.out_path);
      if (!out) throw std::runtime_error("cannot open output file: " + config.out_path);
      out << body;
      if (!body.empty() && body.back() != '\n') out << '\n';
    }
  }

  void write_json(json payload) const {
    json doc;
    doc["config"] = config.to_json();
    doc["model_hash"] = model_hash;
    doc["result"] = std::move(payload);
    write(doc.dump(2));
  }
};

inline int run_validate(const ModelSpec& spec, const Emitter& em) {
  json j;
  j["offspring_mean"] = offspring_mean(spec);
  j["immigration_mean"] = immigration_mean(spec);
  j["slope_l"] = offspring_slope(spec);
  j["fixed_point_q"] = smallest_fixed_point(spec);
  json samples = json::array();
  for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto v = gen_fns(spec, s);
    samples.push_back({{"s", s}, {"F", v.F}, {"G", v.G}, {"A", v.A}, {"B", v.B}});
  }
  j["gen_fn_samples"] = std::move(samples);
  em.write_json(std::move(j));
  return kExitOk;
}

inline int run_classify(const ModelSpec& spec, const Emitter& em) {
  const auto rep = classify(spec);
  em.write_json(to_json(rep));
  const bool inconclusive =
      rep.regular.verdict == Verdict::Inconclusive ||
      rep.recurrent.verdict == Verdict::Inconclusive ||
      rep.ergodic.verdict == Verdict::Inconclusive ||
      rep.strongly_ergodic.verdict == Verdict::Inconclusive;
  return inconclusive ? kExitInconclusive : kExitOk;
}

inline int run_simulate(const ModelSpec& spec, const RunConfig& cfg,
                        const Emitter& em, std::uint64_t x0) {
  const SimCaps caps{cfg.state_cap, cfg.jump_cap};
  if (cfg.replicas == 1) {
    const Path path = simulate(spec, x0, cfg.horizon, caps, cfg.seed, 0);
    if (cfg.format == "csv") {
      std::ostringstream os;
      path_to_csv(path, os);
      em.write(os.str());
    } else {
      json j;
      j["x0"] = x0;
      j["terminal"] = terminal_name(path.terminal);
      j["jump_times"] = path.jump_times;
      j["states"] = path.states;
      em.write_json(std::move(j));
    }
    return kExitOk;
  }
  // Ensemble: per-terminal counts and endpoint statistics.
  std::vector<PathSummary> res(cfg.replicas);
  sim_detail::Sampler sampler(spec);
  sim_detail::for_each_replica(cfg.replicas, [&](std::uint64_t r) {
    RngStream rng(cfg.seed, r);
    const auto s = sim_detail::run_path<false>(sampler, x0, cfg.horizon, caps,
                                               rng, std::nullopt, nullptr);
    res[r] = {s.time, s.state, s.jumps, s.terminal, s.hit_target, s.hit_time};
  });
  std::uint64_t absorbed = 0, exploded = 0, horizon_hit = 0, jump_capped = 0;
  double mean_state = 0.0, mean_jumps = 0.0;
  for (const auto& s : res) {
    switch (s.terminal) {
      case Terminal::Absorbed: ++absorbed; break;
      case Terminal::ExplodedCap: ++exploded; break;
      case Terminal::HorizonReached: ++horizon_hit; break;
      case Terminal::JumpCap: ++jump_capped; break;
    }
    mean_state += double(s.state);
    mean_jumps += double(s.jumps);
  }
  json j;
  j["x0"] = x0;
  j["terminals"] = {{"absorbed", absorbed},
                    {"exploded_cap", exploded},
                    {"horizon_reached", horizon_hit},
                    {"jump_cap", jump_capped}};
  j["exploded_fraction"] = double(exploded) / double(cfg.replicas);
  j["mean_final_state"] = mean_state / double(cfg.replicas);
  j["mean_jumps"] = mean_jumps / double(cfg.replicas);
  em.write_json(std::move(j));
  return kExitOk;
}

inline int run_stationary(const ModelSpec& spec, const RunConfig& cfg,
                          const Emitter& em) {
  const auto st = stationary_nstable(spec, MatrixKind::Immigration,
                                     cfg.truncation, cfg.tol);
  json j;
  j["truncation"] = st.dist.truncation;
  j["stable"] = st.stable;
  j["doubling_delta_mu0"] = st.delta;
  j["residual"] = st.dist.residual;
  j["mu"] = st.dist.mu;
  if (spec.rate.is_power()) {
    const std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    j["stationary_identity_residual"] =
        stationary_gf_residual(spec, st.dist, grid);
  }
  em.write_json(std::move(j));
  return st.stable ? kExitOk : kExitUnstableTruncation;
}

inline int run_hitting(const ModelSpec& spec, const RunConfig& cfg,
                       const Emitter& em, std::uint64_t x0) {
  const auto oracle = hitting_times_nstable(spec, cfg.truncation, 1e-6);
  const SimCaps caps{cfg.state_cap, cfg.jump_cap};
  const auto mc = estimate_hitting(spec, x0, cfg.replicas, cfg.seed, caps,
                                   cfg.horizon);
  const auto rec = recurrence(spec);
  const auto bounds = extinction_time_bounds(spec, x0 == 0 ? 1 : x0, rec);
  json j;
  j["x0"] = x0;
  j["oracle"] = {{"value", x0 < oracle.sol.h.size() ? oracle.sol.h[x0] : -1.0},
                 {"truncation", oracle.sol.truncation},
                 {"stable", oracle.stable},
                 {"doubling_delta", oracle.delta}};
  j["monte_carlo"] = {{"mean", mc.mean},
                      {"std_error", mc.std_error},
                      {"censored_fraction", mc.censored_fraction},
                      {"replicas", mc.replicas}};
  if (bounds.applicable)
    j["analytic_bounds"] = {{"lower", bounds.lower}, {"upper", bounds.upper}};
  else
    j["analytic_bounds"] = {{"applicable", false}, {"reason", bounds.reason}};
  em.write_json(std::move(j));
  return oracle.stable ? kExitOk : kExitUnstableTruncation;
}

inline int run_bounds(const ModelSpec& spec, const Emitter& em) {
  const auto rec = recurrence(spec);
  json rows = json::array();
  bool any = false;
  for (std::uint64_t i = 1; i <= 20; ++i) {
    const auto b = extinction_time_bounds(spec, i, rec);
    if (!b.applicable) {
      em.write_json({{"applicable", false}, {"reason", b.reason}});
      return kExitInconclusive;
    }
    any = true;
    rows.push_back({{"i", i}, {"lower", b.lower}, {"upper", b.upper}});
  }
  em.write_json({{"bounds", rows}, {"applicable", any}});
  return kExitOk;
}

inline int run_crosscheck(const ModelSpec& spec, const RunConfig& cfg,
                          const Emitter& em) {
  std::ostringstream log;
  bool all_ok = true;
  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    log << (ok ? "PASS  " : "FAIL  ") << name;
    if (!detail.empty()) log << "  (" << detail << ")";
    log << '\n';
    all_ok = all_ok && ok;
  };

  const auto rep = classify(spec);
  log << "verdicts: regular=" << verdict_name(rep.regular.verdict)
      << " recurrent=" << verdict_name(rep.recurrent.verdict)
      << " ergodic=" << verdict_name(rep.ergodic.verdict)
      << " strongly_ergodic=" << verdict_name(rep.strongly_ergodic.verdict)
      << '\n';

  {  // implication chain on this model
    auto rank = [](Verdict v) { return v == Verdict::Yes ? 2 : v == Verdict::No ? 0 : 1; };
    const bool chain =
        !(rank(rep.strongly_ergodic.verdict) == 2 && rank(rep.ergodic.verdict) == 0) &&
        !(rank(rep.ergodic.verdict) == 2 && rank(rep.recurrent.verdict) == 0);
    check("implication_chain", chain, "");
  }

  {  // determinism of the pathwise construction
    const SimCaps caps{cfg.state_cap, cfg.jump_cap};
    const Path p1 = simulate(spec, 5, std::min(cfg.horizon, 10.0), caps, cfg.seed, 7);
    const Path p2 = simulate(spec, 5, std::min(cfg.horizon, 10.0), caps, cfg.seed, 7);
    check("determinism", p1.jump_times == p2.jump_times && p1.states == p2.states, "");
  }

  if (spec.rate.is_power()) {  // forward-equation residuals on the truncation
    const auto gen = build_generator(spec, MatrixKind::Immigration,
                                     std::max(cfg.truncation, 200),
                                     BoundaryPolicy::ReflectToLast);
    const double res = forward_residual(gen, 1, 1.0, 1e-4);
    check("forward_residual", res < 1e-5, "residual " + std::to_string(res));

    const auto gen_abs = build_generator(spec, MatrixKind::ImmigrationAbsorbed,
                                         std::max(cfg.truncation, 200),
                                         BoundaryPolicy::AbsorbPastLast);
    const std::vector<double> grid{0.1, 0.3, 0.5, 0.7, 0.9};
    const double gf_res = forward_gf_residual(spec, gen_abs, 2, 1.0, grid);
    check("transition_identity", gf_res < 1e-6, "residual " + std::to_string(gf_res));
    const double rs_res = resolvent_identity_residual(spec, gen_abs, 2, 1.0, grid);
    check("resolvent_identity", rs_res < 1e-6, "residual " + std::to_string(rs_res));
  }

  if (rep.ergodic.verdict == Verdict::Yes) {
    const auto st = stationary_nstable(spec, MatrixKind::Immigration,
                                       cfg.truncation, cfg.tol);
    check("stationary_stable", st.stable,
          "delta " + std::to_string(st.delta));
    check("stationary_residual", st.dist.residual < 1e-8,
          "residual " + std::to_string(st.dist.residual));
    if (spec.rate.is_power()) {
      const std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
      const double r = stationary_gf_residual(spec, st.dist, grid);
      check("stationary_identity", r < 1e-6, "residual " + std::to_string(r));
    }
  }

  if (rep.recurrent.verdict == Verdict::Yes && spec.rate.is_power() &&
      spec.rate.theta() >= 1.0) {
    const auto oracle = hitting_times_nstable(spec, cfg.truncation, 1e-6);
    check("hitting_stable", oracle.stable, "");
    bool bracket = true;
    for (std::uint64_t i = 1; i <= 10; ++i) {
      const auto b = extinction_time_bounds(spec, i, rep.recurrent);
      if (!b.applicable) { bracket = false; break; }
      const double h = oracle.sol.h[i];
      if (!(b.lower <= h + 1e-9 && h <= b.upper + 1e-9)) bracket = false;
    }
    check("extinction_bracket", bracket, "");
  }

  em.write(log.str());
  return all_ok ? kExitOk : kExitInvalidModel;
}

}  // namespace cli_detail

/// Execute one command; returns the process exit status.
inline int run(const RunConfig& config) {
  config.validate();
  std::string raw;
  ModelSpec spec = load_model_file(config.model_path, &raw);

  cli_detail::Emitter em{config, fnv1a64_hex(raw)};
  const std::uint64_t x0 = config.x0;

  if (config.command == "validate") return cli_detail::run_validate(spec, em);
  if (config.command == "classify") return cli_detail::run_classify(spec, em);
  if (config.command == "simulate")
    return cli_detail::run_simulate(spec, config, em, x0);
  if (config.command == "hitting")
    return cli_detail::run_hitting(spec, config, em, x0);
  if (config.command == "stationary")
    return cli_detail::run_stationary(spec, config, em);
  if (config.command == "bounds") return cli_detail::run_bounds(spec, em);
  if (config.command == "crosscheck")
    return cli_detail::run_crosscheck(spec, config, em);
  throw std::invalid_argument("unknown command: " + config.command);
}

}  // namespace nlbranch

#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "nlbranch/classify.hpp"
#include "nlbranch/model.hpp"
#include "nlbranch/simulator.hpp"

namespace nlbranch {

using nlohmann::json;

namespace io_detail {

inline void require_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace io_detail

/// Model document:
/// {"offspring":[...], "immigration":{"pmf":[...], "gamma":g},
///  "rate":{"kind":"power","alpha":a,"theta":t} | {"kind":"table","values":[...]}}
inline ModelSpec model_from_json(const json& j) {
  io_detail::require_keys(j, {"offspring", "immigration", "rate"}, "model");
  if (!j.contains("offspring") || !j.contains("immigration") || !j.contains("rate"))
    throw std::invalid_argument("model: offspring, immigration and rate are required");

  Pmf offspring(j.at("offspring").get<std::vector<double>>());

  const json& imm = j.at("immigration");
  io_detail::require_keys(imm, {"pmf", "gamma"}, "model.immigration");
  Pmf immigration(imm.at("pmf").get<std::vector<double>>());
  const double gamma = imm.at("gamma").get<double>();

  const json& rj = j.at("rate");
  const std::string kind = rj.at("kind").get<std::string>();
  if (kind == "power") {
    io_detail::require_keys(rj, {"kind", "alpha", "theta"}, "model.rate");
    return ModelSpec(std::move(offspring), std::move(immigration), gamma,
                     RateFunction::power(rj.at("alpha").get<double>(),
                                         rj.at("theta").get<double>()));
  }
  if (kind == "table") {
    io_detail::require_keys(rj, {"kind", "values"}, "model.rate");
    return ModelSpec(std::move(offspring), std::move(immigration), gamma,
                     RateFunction::table(rj.at("values").get<std::vector<double>>()));
  }
  throw std::invalid_argument("model.rate: kind must be 'power' or 'table'");
}

inline json model_to_json(const ModelSpec& spec) {
  json j;
  j["offspring"] = spec.offspring.probs();
  j["immigration"] = {{"pmf", spec.immigration.probs()}, {"gamma", spec.gamma}};
  if (spec.rate.is_power())
    j["rate"] = {{"kind", "power"},
                 {"alpha", spec.rate.alpha()},
                 {"theta", spec.rate.theta()}};
  else
    j["rate"] = {{"kind", "table"}, {"values", spec.rate.table_values()}};
  return j;
}

inline ModelSpec load_model_file(const std::string& path,
                                 std::string* raw_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  if (raw_out) *raw_out = ss.str();
  return model_from_json(json::parse(ss.str()));
}

/// FNV-1a 64-bit content hash, hex-encoded; used to stamp artifacts with
/// the exact model file they came from.
inline std::string fnv1a64_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline json to_json(const IntegralVerdict& v) {
  json j;
  j["status"] = IntegralVerdict::status_name(v.status);
  if (v.converged()) {
    j["value"] = v.value;
    j["abs_err"] = v.abs_err;
  }
  if (v.diverges()) j["sign"] = v.sign;
  json ladder = json::array();
  for (const auto& rung : v.evidence)
    ladder.push_back({rung.cutoff, rung.partial});
  j["ladder"] = std::move(ladder);
  return j;
}

inline json to_json(const Evidence& e) {
  json j;
  json vals = json::object();
  for (const auto& [name, v] : e.values) vals[name] = v;
  j["values"] = std::move(vals);
  json ints = json::object();
  for (const auto& [name, v] : e.integrals) ints[name] = to_json(v);
  j["integrals"] = std::move(ints);
  j["notes"] = e.notes;
  return j;
}

inline json to_json(const CriterionResult& r) {
  return {{"verdict", verdict_name(r.verdict)},
          {"clause", r.clause},
          {"evidence", to_json(r.evidence)}};
}

inline json to_json(const ClassificationReport& rep) {
  json j;
  j["model_summary"] = {{"offspring_mean", rep.offspring_mean_value},
                        {"immigration_mean", rep.immigration_mean_value},
                        {"slope_l", rep.slope_l},
                        {"fixed_point_q", rep.fixed_point_q}};
  j["regular"] = to_json(rep.regular);
  j["recurrent"] = to_json(rep.recurrent);
  j["ergodic"] = to_json(rep.ergodic);
  j["strongly_ergodic"] = to_json(rep.strongly_ergodic);
  j["exponentially_ergodic_sufficient"] = to_json(rep.exponential_sufficient);
  return j;
}

inline json to_json(const BdSeries& s) {
  auto series = [](const SeriesSum& sum) {
    json j;
    j["finite"] = sum.finite ? json(true) : json("potentially_infinite");
    j["partial_sum"] = sum.value;
    j["remainder_bound"] = sum.remainder;
    j["terms"] = sum.terms;
    return j;
  };
  json j;
  j["series_s"] = series(s.sum_s);
  j["series_r"] = series(s.sum_r);
  j["u"] = s.u;
  j["u_finite"] = s.u_finite;
  j["ratio_limit"] = s.ratio_limit;
  return j;
}

/// Path CSV: "time,state" rows plus a terminal-flag footer comment.
inline void path_to_csv(const Path& path, std::ostream& os) {
  os << "time,state\n";
  os << "0," << path.states.front() << '\n';
  for (std::size_t k = 0; k < path.jump_times.size(); ++k)
    os << path.jump_times[k] << ',' << path.states[k + 1] << '\n';
  os << "# terminal: " << terminal_name(path.terminal) << '\n';
}

}  // namespace nlbranch

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlbranch/interp.hpp"
#include "nlbranch/model.hpp"
#include "nlbranch/quadrature.hpp"

namespace nlbranch {

enum class Verdict { Yes, No, NotApplicable, Inconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::NotApplicable: return "criterion_not_applicable";
    default: return "inconclusive";
  }
}

/// Numeric backing of a verdict: named scalars, improper-integral ladders,
/// free-form notes.
struct Evidence {
  std::vector<std::pair<std::string, double>> values;
  std::vector<std::pair<std::string, IntegralVerdict>> integrals;
  std::vector<std::string> notes;

  void add(std::string name, double v) {
    values.emplace_back(std::move(name), v);
  }
  void add(std::string name, IntegralVerdict v) {
    integrals.emplace_back(std::move(name), std::move(v));
  }
  void note(std::string s) { notes.push_back(std::move(s)); }
};

/// A single criterion outcome. `clause` identifies which sufficient or
/// necessary-and-sufficient condition produced the verdict.
struct CriterionResult {
  Verdict verdict = Verdict::NotApplicable;
  std::string clause;
  Evidence evidence;
};

struct ClassifyOptions {
  /// Tail index: rate-slope bounds are taken over states i > tail_n.
  int tail_n = 10;
  /// Overrides for the linear comparison slope used by the scale integral.
  std::optional<double> alpha_lower;
  std::optional<double> alpha_upper;
  /// For table rates only: assumed power-law exponent of the tail beyond
  /// the table. A finite table cannot decide sum(1/r_i) < infinity or
  /// r_i -> infinity on its own; without this hint those hypotheses are
  /// reported as undecidable.
  std::optional<double> table_tail_exponent;
  /// Node count of the tabulated inner integral in the scale integral.
  int inner_grid = 4096;
  IntegrateToOneOptions quad;
};

namespace classify_detail {

// ln(1/y) without cancellation near y = 1.
inline double log_inv(double y) { return -std::log1p(y - 1.0); }

// (ln 1/y)^(theta-1); the theta = 1 case is the constant 1.
inline double log_inv_pow(double y, double theta) {
  if (theta == 1.0) return 1.0;
  return std::pow(log_inv(y), theta - 1.0);
}

inline std::optional<bool> rate_sum_finite(const ModelSpec& spec,
                                           const ClassifyOptions& opts) {
  if (spec.rate.is_power()) return spec.rate.theta() > 1.0;
  if (opts.table_tail_exponent) return *opts.table_tail_exponent > 1.0;
  return std::nullopt;
}

inline std::optional<bool> rate_to_infinity(const ModelSpec& spec,
                                            const ClassifyOptions& opts) {
  if (spec.rate.is_power()) return true;
  if (opts.table_tail_exponent) return *opts.table_tail_exponent > 0.0;
  return std::nullopt;
}

inline std::optional<bool> rate_increasing(const ModelSpec& spec) {
  if (spec.rate.is_power()) return true;
  const auto& v = spec.rate.table_values();
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    if (v[i + 1] < v[i]) return false;
  return true;  // constant extension keeps a nondecreasing table nondecreasing
}

inline bool rates_positive(const ModelSpec& spec, int up_to = 1024) {
  if (spec.rate.is_power()) return true;
  const auto& v = spec.rate.table_values();
  for (std::size_t i = 1; i < v.size() && int(i) <= up_to; ++i)
    if (v[i] <= 0.0) return false;
  return true;
}

struct SlopeBounds {
  std::optional<double> lower;  // alpha with r_i / i >= alpha beyond tail_n
  std::optional<double> upper;  // alpha with r_i / i <= alpha beyond tail_n
};

inline SlopeBounds slope_bounds(const ModelSpec& spec,
                                const ClassifyOptions& opts) {
  SlopeBounds sb;
  if (spec.rate.is_power()) {
    const double alpha = spec.rate.alpha(), theta = spec.rate.theta();
    const double edge = alpha * std::pow(double(opts.tail_n + 1), theta - 1.0);
    if (theta == 1.0) {
      sb.lower = sb.upper = alpha;
    } else if (theta > 1.0) {
      sb.lower = edge;  // increasing in i, no finite upper slope
    } else {
      sb.upper = edge;  // decreasing toward 0, no positive lower slope
    }
  } else {
    // A constant-extended table has r_i / i -> 0, so only an upper slope
    // can be read off; a lower slope must come from the caller.
    const auto& v = spec.rate.table_values();
    double hi = v.back() / double(v.size());
    for (std::size_t i = std::size_t(opts.tail_n) + 1; i < v.size(); ++i)
      hi = std::max(hi, v[i] / double(i));
    sb.upper = hi;
  }
  if (opts.alpha_lower) sb.lower = *opts.alpha_lower;
  if (opts.alpha_upper) sb.upper = *opts.alpha_upper;
  return sb;
}

}  // namespace classify_detail

/// The scale integral J = int_0^1 1/(alpha B(y)) exp[-int_0^y A/(alpha B)] dy
/// deciding recurrence vs transience for a linear comparison slope alpha.
/// The inner integral is tabulated on a Chebyshev-spaced grid and
/// monotone-cubic interpolated; the tabulation error is bounded by a grid
/// doubling check and evaluations past the last node fall back to direct
/// panels.
struct ScaleIntegral {
  IntegralVerdict outer;
  double alpha_used = 0.0;
  double grid_doubling_delta = 0.0;
};

inline ScaleIntegral scale_integral(const ModelSpec& spec, double alpha_bound,
                                    const ClassifyOptions& opts = {}) {
  if (!(alpha_bound > 0.0))
    throw std::invalid_argument("scale integral: alpha must be > 0");
  auto g = [&](double x) {
    return gen_fn_A(spec, x) / (alpha_bound * gen_fn_B(spec, x));
  };

  struct Grid {
    std::vector<double> x, h;
  };
  auto build = [&](int n) {
    Grid grid;
    grid.x.resize(n);
    grid.h.resize(n);
    const double pi = 3.14159265358979323846;
    for (int j = 0; j < n; ++j)
      grid.x[j] = 0.5 * (1.0 - std::cos(pi * double(j) / double(n)));
    grid.h[0] = 0.0;  // x[0] == 0 and H(0) = 0
    for (int j = 1; j < n; ++j)
      grid.h[j] =
          grid.h[j - 1] + adaptive_quad(g, grid.x[j - 1], grid.x[j]).value;
    return grid;
  };

  const Grid coarse = build(opts.inner_grid);
  const Grid fine = build(2 * opts.inner_grid);
  MonotoneCubic coarse_interp(coarse.x, coarse.h);
  MonotoneCubic fine_interp(fine.x, fine.h);

  double delta = 0.0;
  for (int j = 1; j + 1 < int(coarse.x.size()); ++j) {
    const double mid = 0.5 * (coarse.x[j] + coarse.x[j + 1]);
    delta = std::max(delta, std::abs(coarse_interp(mid) - fine_interp(mid)));
  }

  const double x_last = fine_interp.max_x();
  const double h_last = fine_interp(x_last);
  auto inner = [&](double y) {
    if (y <= x_last) return fine_interp(y);
    return h_last + adaptive_quad(g, x_last, y).value;
  };
  auto f = [&](double y) {
    return std::exp(-inner(y)) / (alpha_bound * gen_fn_B(spec, y));
  };

  ScaleIntegral out;
  out.alpha_used = alpha_bound;
  out.grid_doubling_delta = delta;
  out.outer = integrate_to_one(f, 0.0, {}, opts.quad);
  return out;
}

/// Non-explosiveness of the process (equivalently of its branching-only
/// restriction: the two share regularity).
inline CriterionResult regularity(const ModelSpec& spec,
                                  const ClassifyOptions& opts = {}) {
  using namespace classify_detail;
  CriterionResult res;
  const double mean_m = offspring_mean(spec);
  res.evidence.add("offspring_mean", mean_m);

  if (mean_m <= 1.0) {
    res.verdict = Verdict::Yes;
    res.clause = "regularity.mean_subcritical";
    return res;
  }
  if (spec.rate.is_power()) {
    // Supercritical power rate: regular iff the escape integral of 1/B with
    // the log kernel diverges to -infinity on an interval (q, 1).
    const double q = smallest_fixed_point(spec);
    const double eps = 0.5 * (1.0 + q);
    const double theta = spec.rate.theta();
    auto f = [&](double s) {
      return log_inv_pow(s, theta) / gen_fn_B(spec, s);
    };
    const auto verdict = integrate_to_one(f, eps, {}, opts.quad);
    res.evidence.add("fixed_point_q", q);
    res.evidence.add("escape_integral", verdict);
    res.clause = "regularity.escape_integral";
    if (verdict.diverges() && verdict.sign < 0)
      res.verdict = Verdict::Yes;
    else if (verdict.converged())
      res.verdict = Verdict::No;
    else
      res.verdict = Verdict::Inconclusive;
    return res;
  }
  if (auto finite = rate_sum_finite(spec, opts)) {
    if (*finite) {
      res.verdict = Verdict::No;  // fast rates with M > 1 explode
      res.clause = "regularity.rate_sum_finite";
      return res;
    }
  }
  res.verdict = Verdict::NotApplicable;
  res.clause = "regularity.none";
  res.evidence.note("no criterion covers M > 1 with this rate form");
  return res;
}

/// Certainty of return to every state. Requires irreducibility
/// (gamma r_i b_0 > 0 for i >= 1); reports transience as verdict No.
inline CriterionResult recurrence(const ModelSpec& spec,
                                  const ClassifyOptions& opts = {}) {
  using namespace classify_detail;
  CriterionResult res;
  const double mean_m = offspring_mean(spec);
  res.evidence.add("offspring_mean", mean_m);

  if (!(spec.gamma > 0.0) || !(spec.offspring[0] > 0.0) ||
      !rates_positive(spec)) {
    res.verdict = Verdict::NotApplicable;
    res.clause = "recurrence.irreducibility";
    res.evidence.note("needs gamma > 0, b_0 > 0 and r_i > 0 for i >= 1");
    return res;
  }
  if (mean_m > 1.0) {
    res.verdict = Verdict::No;
    res.clause = "recurrence.supercritical";
    return res;
  }
  if (mean_m < 1.0) {
    if (auto to_inf = rate_to_infinity(spec, opts); to_inf && *to_inf) {
      res.verdict = Verdict::Yes;  // immigration mean is finite by support
      res.clause = "recurrence.unbounded_rates";
      return res;
    }
  }

  // Scale-integral route, M <= 1: J = infinity with a lower slope bound
  // certifies recurrence; J finite with an upper slope bound certifies
  // transience.
  const auto increasing = rate_increasing(spec);
  if (!increasing || !*increasing) {
    res.verdict = Verdict::NotApplicable;
    res.clause = "recurrence.none";
    res.evidence.note("scale-integral route needs nondecreasing rates");
    return res;
  }
  const auto slopes = slope_bounds(spec, opts);
  if (slopes.lower) {
    const auto j = scale_integral(spec, *slopes.lower, opts);
    res.evidence.add("slope_lower", *slopes.lower);
    res.evidence.add("scale_integral_lower_slope", j.outer);
    res.evidence.add("inner_grid_doubling_delta", j.grid_doubling_delta);
    if (j.outer.diverges() && j.outer.sign > 0) {
      res.verdict = Verdict::Yes;
      res.clause = "recurrence.scale_integral";
      return res;
    }
  }
  if (slopes.upper) {
    const auto j = scale_integral(spec, *slopes.upper, opts);
    res.evidence.add("slope_upper", *slopes.upper);
    res.evidence.add("scale_integral_upper_slope", j.outer);
    res.evidence.add("inner_grid_doubling_delta", j.grid_doubling_delta);
    if (j.outer.converged()) {
      res.verdict = Verdict::No;
      res.clause = "recurrence.scale_integral";
      return res;
    }
  }
  res.verdict = (slopes.lower || slopes.upper) ? Verdict::Inconclusive
                                               : Verdict::NotApplicable;
  res.clause = "recurrence.scale_integral";
  if (!slopes.lower && !slopes.upper)
    res.evidence.note("no usable linear slope bound for the comparison");
  return res;
}

/// Positive recurrence. The power-rate clause is an iff for recurrent
/// processes; the fast-rates clause is sufficient on its own.
inline CriterionResult ergodicity(const ModelSpec& spec,
                                  const CriterionResult& recurrent,
                                  const ClassifyOptions& opts = {}) {
  using namespace classify_detail;
  CriterionResult res;
  const double mean_m = offspring_mean(spec);

  if (recurrent.verdict == Verdict::No) {
    res.verdict = Verdict::No;
    res.clause = "ergodicity.implied_by_transience";
    return res;
  }

  // Fast-rates sufficient clause, evaluated for the cross-agreement check.
  const auto increasing = rate_increasing(spec);
  const auto sum_finite = rate_sum_finite(spec, opts);
  const bool fast_rates = mean_m <= 1.0 && increasing && *increasing &&
                          sum_finite && *sum_finite;

  if (spec.rate.is_power() && spec.rate.theta() >= 1.0 &&
      recurrent.verdict == Verdict::Yes) {
    const double alpha = spec.rate.alpha(), theta = spec.rate.theta();
    auto f = [&](double s) {
      return gen_fn_A(spec, s) / (alpha * gen_fn_B(spec, s)) *
             log_inv_pow(s, theta);
    };
    const auto verdict = integrate_to_one(f, 0.0, {}, opts.quad);
    res.evidence.add("immigration_integral", verdict);
    res.clause = "ergodicity.immigration_integral";
    if (verdict.converged())
      res.verdict = Verdict::Yes;
    else if (verdict.diverges())
      res.verdict = Verdict::No;
    else
      res.verdict = Verdict::Inconclusive;
    if (fast_rates && res.verdict == Verdict::No)
      throw std::logic_error(
          "ergodicity: sufficient clause and integral clause disagree");
    return res;
  }

  if (fast_rates) {
    res.verdict = Verdict::Yes;
    res.clause = "ergodicity.fast_rates";
    return res;
  }
  res.verdict = Verdict::NotApplicable;
  res.clause = "ergodicity.none";
  return res;
}

/// Sufficient condition for exponential ergodicity: subcritical mean with
/// rates growing at least linearly.
inline CriterionResult exponential_ergodicity_sufficient(
    const ModelSpec& spec, const ClassifyOptions& opts = {}) {
  CriterionResult res;
  const double mean_m = offspring_mean(spec);
  bool liminf_positive = false;
  if (spec.rate.is_power())
    liminf_positive = spec.rate.theta() >= 1.0;
  else if (opts.table_tail_exponent)
    liminf_positive = *opts.table_tail_exponent >= 1.0;
  res.evidence.add("offspring_mean", mean_m);
  res.clause = "exponential.linear_drift";
  res.verdict =
      (mean_m < 1.0 && liminf_positive) ? Verdict::Yes : Verdict::NotApplicable;
  return res;
}

/// Uniform-in-initial-state ergodicity.
inline CriterionResult strong_ergodicity(const ModelSpec& spec,
                                         const ClassifyOptions& opts = {}) {
  using namespace classify_detail;
  CriterionResult res;
  const double mean_m = offspring_mean(spec);
  const auto sum_finite = rate_sum_finite(spec, opts);

  if (sum_finite && !*sum_finite) {
    res.verdict = Verdict::No;
    res.clause = "strong.rate_sum_infinite";
    return res;
  }
  if (spec.rate.is_power() && spec.rate.theta() > 1.0) {
    const double alpha = spec.rate.alpha(), theta = spec.rate.theta();
    auto f = [&](double s) {
      return log_inv_pow(s, theta) / (alpha * gen_fn_B(spec, s));
    };
    const auto verdict = integrate_to_one(f, 0.0, {}, opts.quad);
    res.evidence.add("uniform_integral", verdict);
    res.clause = "strong.uniform_integral";
    const auto increasing = rate_increasing(spec);
    const bool fast_rates = mean_m < 1.0 && increasing && *increasing &&
                            sum_finite && *sum_finite;
    if (verdict.converged())
      res.verdict = Verdict::Yes;
    else if (verdict.diverges())
      res.verdict = Verdict::No;
    else
      res.verdict = Verdict::Inconclusive;
    if (fast_rates && res.verdict == Verdict::No)
      throw std::logic_error(
          "strong ergodicity: sufficient clause and integral clause disagree");
    return res;
  }
  const auto increasing = rate_increasing(spec);
  if (mean_m < 1.0 && increasing && *increasing && sum_finite && *sum_finite) {
    res.verdict = Verdict::Yes;
    res.clause = "strong.fast_rates";
    return res;
  }
  res.verdict = Verdict::NotApplicable;
  res.clause = "strong.none";
  return res;
}

/// Full report: all verdicts plus the implication chain
/// strongly ergodic => ergodic => recurrent enforced by upgrading weaker
/// verdicts (a computed contradiction throws).
struct ClassificationReport {
  CriterionResult regular;
  CriterionResult recurrent;
  CriterionResult ergodic;
  CriterionResult strongly_ergodic;
  CriterionResult exponential_sufficient;
  // Model summary for reporting.
  double offspring_mean_value = 0.0;
  double immigration_mean_value = 0.0;
  double slope_l = 0.0;
  double fixed_point_q = 1.0;
};

inline ClassificationReport classify(const ModelSpec& spec,
                                     const ClassifyOptions& opts = {}) {
  ClassificationReport rep;
  rep.regular = regularity(spec, opts);
  rep.recurrent = recurrence(spec, opts);
  rep.ergodic = ergodicity(spec, rep.recurrent, opts);
  rep.strongly_ergodic = strong_ergodicity(spec, opts);
  rep.exponential_sufficient = exponential_ergodicity_sufficient(spec, opts);
  rep.offspring_mean_value = offspring_mean(spec);
  rep.immigration_mean_value = immigration_mean(spec);
  rep.slope_l = offspring_slope(spec);
  rep.fixed_point_q = smallest_fixed_point(spec);

  auto upgrade = [](CriterionResult& weak, Verdict v, const char* via) {
    if (weak.verdict == v) return;
    if (weak.verdict == Verdict::Yes || weak.verdict == Verdict::No)
      throw std::logic_error("classification: implication chain violated");
    weak.verdict = v;
    weak.clause = via;
  };
  if (rep.strongly_ergodic.verdict == Verdict::Yes) {
    upgrade(rep.ergodic, Verdict::Yes, "implied.by_strong_ergodicity");
  }
  if (rep.ergodic.verdict == Verdict::Yes) {
    upgrade(rep.recurrent, Verdict::Yes, "implied.by_ergodicity");
  }
  if (rep.recurrent.verdict == Verdict::No) {
    upgrade(rep.ergodic, Verdict::No, "implied.by_transience");
    upgrade(rep.strongly_ergodic, Verdict::No, "implied.by_transience");
  }
  if (rep.ergodic.verdict == Verdict::No &&
      rep.strongly_ergodic.verdict != Verdict::No) {
    upgrade(rep.strongly_ergodic, Verdict::No, "implied.by_non_ergodicity");
  }
  return rep;
}

/// Analytic bracket for the expected extinction time E_i(sigma_0) of a
/// recurrent process with power rate of exponent theta >= 1.
struct ExtinctionBounds {
  bool applicable = false;
  std::string reason;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  IntegralVerdict base_integral;
  IntegralVerdict weight_integral;
};

inline ExtinctionBounds extinction_time_bounds(
    const ModelSpec& spec, std::uint64_t initial_state,
    const CriterionResult& recurrent, const ClassifyOptions& opts = {}) {
  using namespace classify_detail;
  ExtinctionBounds out;
  if (initial_state < 1) {
    out.reason = "initial state must be >= 1";
    return out;
  }
  if (!spec.rate.is_power() || spec.rate.theta() < 1.0) {
    out.reason = "needs a power rate with theta >= 1";
    return out;
  }
  const bool certain_hit =
      recurrent.verdict == Verdict::Yes ||
      (spec.gamma == 0.0 && smallest_fixed_point(spec) == 1.0);
  if (!certain_hit) {
    out.reason = "extinction is not certain (not recurrent)";
    return out;
  }
  const double alpha = spec.rate.alpha(), theta = spec.rate.theta();
  auto weight = [&](double y) {
    return gen_fn_A(spec, y) / (alpha * gen_fn_B(spec, y)) *
           log_inv_pow(y, theta);
  };
  out.weight_integral = integrate_to_one(weight, 0.0, {}, opts.quad);
  if (!out.weight_integral.converged()) {
    out.reason = "immigration integral does not converge";
    return out;
  }
  const double i = double(initial_state);
  auto base = [&](double y) {
    // (1 - y^i) evaluated as -expm1(i log y) to stay exact near y = 1.
    const double one_minus_yi = -std::expm1(i * std::log1p(y - 1.0));
    return one_minus_yi / (alpha * gen_fn_B(spec, y)) * log_inv_pow(y, theta);
  };
  out.base_integral = integrate_to_one(base, 0.0, {}, opts.quad);
  if (!out.base_integral.converged()) {
    out.reason = "base integral does not converge";
    return out;
  }
  const double gamma_theta = std::tgamma(theta);
  out.lower = out.base_integral.value;
  out.upper = out.base_integral.value / gamma_theta *
              std::exp(out.weight_integral.value / gamma_theta);
  out.applicable = true;
  return out;
}

/// Partial sums of the comparison birth-death series with geometric tail
/// detection, plus the expected-descent ladder u_i. All products are
/// carried in log space.
struct SeriesSum {
  bool finite = false;
  double value = std::numeric_limits<double>::quiet_NaN();
  double remainder = 0.0;  // geometric tail bound when finite
  int terms = 0;
};

struct BdSeries {
  SeriesSum sum_s;  // series deciding strong ergodicity of the comparison
  SeriesSum sum_r;  // series deciding its ergodicity
  std::vector<double> u;
  bool u_finite = true;
  double ratio_limit = std::numeric_limits<double>::quiet_NaN();
};

inline BdSeries bd_series(const ModelSpec& spec, int cap = 200) {
  if (cap < 10) throw std::invalid_argument("bd_series: cap must be >= 10");
  const double b0 = spec.offspring[0];
  if (!(b0 > 0.0))
    throw std::invalid_argument("bd_series: needs b_0 > 0");
  const double slope = offspring_slope(spec);
  const double imm = spec.gamma * spec.immigration.mean();

  const int k_max = 2 * cap + 64;
  std::vector<double> log_d(k_max + 3), log_c(k_max + 3);
  std::vector<double> d(k_max + 3), c(k_max + 3);
  d[0] = imm;
  c[0] = 0.0;
  log_d[0] = 0.0;
  log_c[0] = 0.0;
  std::vector<double> ld_prefix(k_max + 3, 0.0), lc_prefix(k_max + 3, 0.0);
  for (int i = 1; i <= k_max + 2; ++i) {
    const double r = spec.rate(std::uint64_t(i));
    if (!(r > 0.0))
      throw std::invalid_argument("bd_series: needs r_i > 0 for i >= 1");
    d[i] = r * slope + imm;
    c[i] = r * b0;
    ld_prefix[i] = ld_prefix[i - 1] + std::log(d[i]);  // -inf once d_i = 0
    lc_prefix[i] = lc_prefix[i - 1] + std::log(c[i]);
  }
  const bool births_zero = !(slope > 0.0) && !(imm > 0.0);

  BdSeries out;
  out.ratio_limit = slope / b0;

  auto tail_from_window = [](const std::vector<double>& terms, SeriesSum& sum) {
    const int w = 8;
    if (int(terms.size()) < w + 1) return;
    double rho_min = 1e300, rho_max = -1e300;
    for (std::size_t i = terms.size() - w; i < terms.size(); ++i) {
      if (terms[i - 1] <= 0.0) return;
      const double rho = terms[i] / terms[i - 1];
      rho_min = std::min(rho_min, rho);
      rho_max = std::max(rho_max, rho);
    }
    if (rho_max < 0.999 && rho_max - rho_min < 1e-3) {
      sum.finite = true;
      sum.remainder = terms.back() * rho_max / (1.0 - rho_max);
    }
  };

  // S = sum_n ( 1/c_{n+1} + sum_{k=1}^n prod_{j=k}^n d_j / prod_{j=k}^{n+1} c_j )
  {
    std::vector<double> terms;
    double acc = 0.0;
    for (int n = 1; n <= cap; ++n) {
      double t = 1.0 / c[n + 1];
      if (!births_zero) {
        for (int k = 1; k <= n; ++k)
          t += std::exp((ld_prefix[n] - ld_prefix[k - 1]) -
                        (lc_prefix[n + 1] - lc_prefix[k - 1]));
      }
      acc += t;
      terms.push_back(t);
    }
    out.sum_s.value = acc;
    out.sum_s.terms = cap;
    tail_from_window(terms, out.sum_s);
  }

  // R = sum_n d_0 ... d_{n-1} / (c_1 ... c_n)
  {
    std::vector<double> terms;
    double acc = 0.0;
    for (int n = 1; n <= cap; ++n) {
      double t = 0.0;
      if (d[0] > 0.0)
        t = d[0] * std::exp(ld_prefix[n - 1] - lc_prefix[n]);
      acc += t;
      terms.push_back(t);
    }
    out.sum_r.value = acc;
    out.sum_r.terms = cap;
    if (d[0] == 0.0) {
      out.sum_r.finite = true;  // empty immigration: all terms vanish
      out.sum_r.remainder = 0.0;
    } else {
      tail_from_window(terms, out.sum_r);
    }
  }

  // u_i = sum_{k=0}^{i-1} ( 1/c_{k+1} + sum_{j=k+1}^inf prod d / prod c )
  out.u.assign(1, 0.0);
  for (int k = 0; k + 1 <= cap; ++k) {
    double inner = 0.0;
    bool inner_finite = true;
    if (!births_zero) {
      // prod_{l=k+1}^{j} d_l / prod_{l=k+1}^{j+1} c_l, starting at j = k+1
      double term = std::exp((ld_prefix[k + 1] - ld_prefix[k]) -
                             (lc_prefix[k + 2] - lc_prefix[k]));
      inner = term;
      int stall = 0;
      for (int j = k + 2; j <= k_max; ++j) {
        const double ratio = d[j] / c[j + 1];
        term *= ratio;
        inner += term;
        if (ratio >= 1.0 - 1e-12) {
          if (++stall >= 16) {
            inner_finite = false;
            break;
          }
        } else {
          stall = 0;
        }
        if (term < 1e-16 * inner && j > k + 8) {
          inner += term * ratio / (1.0 - std::min(ratio, 0.999999));
          break;
        }
      }
    }
    if (!inner_finite) {
      out.u_finite = false;
      break;
    }
    out.u.push_back(out.u.back() + 1.0 / c[k + 1] + inner);
  }
  return out;
}

}  // namespace nlbranch

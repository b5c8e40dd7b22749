#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlbranch {

/// Finite-support probability mass function indexed from 0.
/// Entries must lie in [0,1] and sum to 1 within 1e-12; the tail beyond
/// the stored sequence is zero. Construction rejects invalid input rather
/// than renormalizing.
class Pmf {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit Pmf(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw std::invalid_argument("pmf: empty support");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("pmf: entry outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance)
      throw std::invalid_argument("pmf: entries sum to " + std::to_string(sum) +
                                  ", expected 1 within 1e-12");
  }

  double operator[](std::size_t i) const {
    return i < probs_.size() ? probs_[i] : 0.0;
  }
  std::size_t size() const { return probs_.size(); }
  const std::vector<double>& probs() const { return probs_; }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 1; i < probs_.size(); ++i) m += double(i) * probs_[i];
    return m;
  }

  /// Generating function sum_i p_i s^i for s in [0,1], by Horner.
  double gf(double s) const {
    double acc = 0.0;
    for (std::size_t i = probs_.size(); i-- > 0;) acc = acc * s + probs_[i];
    return acc;
  }

  /// gf(s) - 1, computed without cancellation near s = 1:
  /// sum_{i>=1} p_i (s^i - 1) with s^i - 1 = expm1(i * log(s)).
  double gf_minus_one(double s) const {
    if (s <= 0.0) return probs_[0] - 1.0;
    if (s >= 1.0) return 0.0;
    const double l = std::log1p(-(1.0 - s));
    double acc = 0.0;
    for (std::size_t i = 1; i < probs_.size(); ++i) {
      if (probs_[i] != 0.0) acc += probs_[i] * std::expm1(double(i) * l);
    }
    return acc;
  }

 private:
  std::vector<double> probs_;
};

/// Per-capita event rate as a function of population size, with r(0) = 0.
/// Either a power law r(i) = alpha * i^theta or a finite table (constant
/// extension past the last entry).
class RateFunction {
 public:
  enum class Kind { Power, Table };

  static RateFunction power(double alpha, double theta) {
    if (!(alpha > 0.0)) throw std::invalid_argument("rate: alpha must be > 0");
    if (!(theta > 0.0)) throw std::invalid_argument("rate: theta must be > 0");
    RateFunction r;
    r.kind_ = Kind::Power;
    r.alpha_ = alpha;
    r.theta_ = theta;
    return r;
  }

  static RateFunction table(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("rate: empty table");
    if (values[0] != 0.0) throw std::invalid_argument("rate: r(0) must be 0");
    for (double v : values)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("rate: negative or non-finite table entry");
    RateFunction r;
    r.kind_ = Kind::Table;
    r.table_ = std::move(values);
    return r;
  }

  Kind kind() const { return kind_; }
  bool is_power() const { return kind_ == Kind::Power; }
  double alpha() const { require_power(); return alpha_; }
  double theta() const { require_power(); return theta_; }
  const std::vector<double>& table_values() const {
    if (kind_ != Kind::Table) throw std::logic_error("rate: not a table");
    return table_;
  }

  double operator()(std::uint64_t i) const {
    if (i == 0) return 0.0;
    if (kind_ == Kind::Power) {
      if (theta_ == 1.0) return alpha_ * double(i);
      if (theta_ == 2.0) return alpha_ * double(i) * double(i);
      return alpha_ * std::pow(double(i), theta_);
    }
    return i < table_.size() ? table_[i] : table_.back();
  }

 private:
  RateFunction() = default;
  void require_power() const {
    if (kind_ != Kind::Power) throw std::logic_error("rate: not a power law");
  }
  Kind kind_ = Kind::Power;
  double alpha_ = 0.0;
  double theta_ = 0.0;
  std::vector<double> table_;
};

/// Model primitives: offspring law b (b_1 = 0), immigration law a (a_0 = 0),
/// immigration rate gamma >= 0 and the event-rate function r.
/// Immutable after construction; safe to share across threads.
struct ModelSpec {
  Pmf offspring;
  Pmf immigration;
  double gamma;
  RateFunction rate;

  ModelSpec(Pmf offspring_law, Pmf immigration_law, double gamma_rate,
            RateFunction rate_fn)
      : offspring(std::move(offspring_law)),
        immigration(std::move(immigration_law)),
        gamma(gamma_rate),
        rate(std::move(rate_fn)) {
    if (offspring[1] != 0.0)
      throw std::invalid_argument("model: offspring law must have b_1 = 0");
    if (immigration[0] != 0.0)
      throw std::invalid_argument("model: immigration law must have a_0 = 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw std::invalid_argument("model: gamma must be finite and >= 0");
  }
};

/// Offspring mean M = sum_j j b_j.
inline double offspring_mean(const ModelSpec& spec) {
  return spec.offspring.mean();
}

/// Immigration mean m = sum_j j a_j.
inline double immigration_mean(const ModelSpec& spec) {
  return spec.immigration.mean();
}

/// Net per-event growth slope L = M + b_0 - 1 = sum_k k b_{k+1} of the
/// comparison birth-death process.
inline double offspring_slope(const ModelSpec& spec) {
  return offspring_mean(spec) + spec.offspring[0] - 1.0;
}

struct GenFnValues {
  double F;  // immigration pgf
  double G;  // offspring pgf
  double A;  // gamma * (1 - F)
  double B;  // G - s
};

/// Evaluate F, G, A, B at s in [0,1]. A and B are computed in a
/// cancellation-free form so that their behaviour near s = 1 (where both
/// vanish) is resolved to full relative precision.
inline GenFnValues gen_fns(const ModelSpec& spec, double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::domain_error("gen_fns: s outside [0,1]");
  const double gm1 = spec.offspring.gf_minus_one(s);
  const double fm1 = spec.immigration.gf_minus_one(s);
  GenFnValues v;
  v.G = 1.0 + gm1;
  v.F = 1.0 + fm1;
  v.A = spec.gamma * (-fm1);
  v.B = gm1 + (1.0 - s);
  return v;
}

inline double gen_fn_B(const ModelSpec& spec, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("B: s outside [0,1]");
  return spec.offspring.gf_minus_one(s) + (1.0 - s);
}

inline double gen_fn_A(const ModelSpec& spec, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("A: s outside [0,1]");
  return spec.gamma * (-spec.immigration.gf_minus_one(s));
}

/// Smallest root q of G(s) = s in [0,1], by bisection to absolute
/// tolerance 1e-12. Returns exactly 1 when M <= 1 (and confirms B >= 0
/// numerically), exactly 0 when b_0 = 0.
inline double smallest_fixed_point(const ModelSpec& spec) {
  constexpr double kTol = 1e-12;
  if (spec.offspring[0] == 0.0) return 0.0;  // G(0) = 0
  if (offspring_mean(spec) <= 1.0) {
    // B >= 0 on [0,1]; confirm on a grid before reporting the root at 1.
    for (int j = 1; j < 64; ++j) {
      if (gen_fn_B(spec, j / 64.0) < -kTol)
        throw std::logic_error("fixed point: B < 0 with M <= 1");
    }
    return 1.0;
  }
  // M > 1: B(0) = b_0 > 0 and B < 0 just below 1; bracket and bisect.
  double hi = 0.0;
  for (int j = 1; j <= 48; ++j) {
    const double s = 1.0 - std::ldexp(1.0, -j);
    if (gen_fn_B(spec, s) < 0.0) {
      hi = s;
      break;
    }
  }
  if (hi == 0.0) throw std::logic_error("fixed point: failed to bracket root");
  double lo = 0.0;
  while (hi - lo > kTol) {
    const double mid = 0.5 * (lo + hi);
    (gen_fn_B(spec, mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace nlbranch

#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nlbranch/classify.hpp"
#include "nlbranch/generator.hpp"
#include "nlbranch/model.hpp"
#include "nlbranch/quadrature.hpp"

namespace nlbranch {

class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace oracle_detail {

inline Eigen::SparseMatrix<double> to_eigen(const GeneratorMatrix& gen,
                                            bool transpose = false) {
  const int n = gen.n_rows();
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < n; ++i)
    for (const auto& [col, v] : gen.rows[i])
      trips.emplace_back(transpose ? col : i, transpose ? i : col, v);
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

// row-vector times generator: (v Q)_j = sum_k v_k q_kj
inline std::vector<double> left_apply(const std::vector<double>& v,
                                      const GeneratorMatrix& gen) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v[k] == 0.0) continue;
    for (const auto& [col, q] : gen.rows[k]) out[col] += v[k] * q;
  }
  return out;
}

}  // namespace oracle_detail

/// Row i of the transition matrix exp(tQ) on the truncation, via
/// uniformization: a Poisson(Lambda t) mixture of powers of P = I + Q/Lambda.
/// The series is cut when the accumulated Poisson mass reaches
/// 1 - tail_tol, so entries are nonnegative by construction and the row
/// deficit is below tail_tol.
inline std::vector<double> transition_probs(const GeneratorMatrix& gen, int i,
                                            double t, double tail_tol = 1e-12) {
  if (t < 0.0) throw std::invalid_argument("transition_probs: t < 0");
  const int n = gen.n_rows();
  if (i < 0 || i >= n) throw std::invalid_argument("transition_probs: bad state");
  std::vector<double> v(n, 0.0);
  v[i] = 1.0;
  double lambda = 0.0;
  for (int k = 0; k < n; ++k) lambda = std::max(lambda, gen.total_rate(k));
  if (t == 0.0 || lambda == 0.0) return v;

  const double lt = lambda * t;
  std::vector<double> result(n, 0.0);
  double log_w = -lt;  // log Poisson(lt) weight at term 0
  double mass = 0.0;
  const long max_terms =
      long(lt + 12.0 * std::sqrt(lt + 1.0) + 64.0);
  for (long m = 0; m <= max_terms; ++m) {
    const double w = std::exp(log_w);
    if (w > 0.0) {
      for (int j = 0; j < n; ++j) result[j] += w * v[j];
      mass += w;
    }
    if (mass >= 1.0 - tail_tol && double(m) >= lt) break;
    // v <- v P with P = I + Q / lambda
    std::vector<double> qv = oracle_detail::left_apply(v, gen);
    for (int j = 0; j < n; ++j) v[j] += qv[j] / lambda;
    log_w += std::log(lt) - std::log(double(m + 1));
  }
  return result;
}

/// Max-norm defect of the forward equation dp/dt = p Q at time t + dt/2,
/// estimated with a central difference of uniformized rows. Second order
/// in dt; boundary states are excluded from the norm.
inline double forward_residual(const GeneratorMatrix& gen, int i, double t,
                               double dt) {
  const auto p0 = transition_probs(gen, i, t);
  const auto p1 = transition_probs(gen, i, t + dt);
  const auto pm = transition_probs(gen, i, t + 0.5 * dt);
  const auto pmq = oracle_detail::left_apply(pm, gen);
  const int interior = gen.truncation - 1;  // exclude the reflected last row
  double worst = 0.0;
  for (int j = 0; j < interior; ++j)
    worst = std::max(worst, std::abs((p1[j] - p0[j]) / dt - pmq[j]));
  return worst;
}

/// Stationary distribution of a conservative (reflecting) truncation:
/// solves mu Q = 0, sum mu = 1 by sparse LU on the transposed system with
/// the first equation replaced by the normalization.
struct StationaryDist {
  std::vector<double> mu;
  int truncation = 0;
  double residual = 0.0;  // max-norm of mu Q
};

inline StationaryDist stationary(const GeneratorMatrix& gen) {
  if (gen.boundary != BoundaryPolicy::ReflectToLast)
    throw std::invalid_argument("stationary: needs a reflecting truncation");
  const int n = gen.n_rows();
  // Transposed system with equation 0 replaced by the normalization row.
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < n; ++i)
    for (const auto& [col, v] : gen.rows[i])
      if (col != 0) trips.emplace_back(col, i, v);
  for (int j = 0; j < n; ++j) trips.emplace_back(0, j, 1.0);
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success)
    throw SingularSystem("stationary: reducible or singular truncation");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[0] = 1.0;
  Eigen::VectorXd x = lu.solve(rhs);

  StationaryDist out;
  out.truncation = gen.truncation;
  out.mu.assign(x.data(), x.data() + n);
  double sum = 0.0;
  for (double& m : out.mu) {
    if (m < 0.0) {
      if (m < -1e-9) throw SingularSystem("stationary: negative mass");
      m = 0.0;
    }
    sum += m;
  }
  for (double& m : out.mu) m /= sum;
  const auto muq = oracle_detail::left_apply(out.mu, gen);
  for (double r : muq) out.residual = std::max(out.residual, std::abs(r));
  return out;
}

struct StationaryNStable {
  StationaryDist dist;
  bool stable = false;
  double delta = 0.0;  // change of mu_0 on the last doubling
  int n_used = 0;
};

/// Doubles the truncation until mu_0 moves by less than tol.
inline StationaryNStable stationary_nstable(const ModelSpec& spec,
                                            MatrixKind kind, int n_start = 128,
                                            double tol = 1e-8,
                                            int n_max = 1 << 14) {
  StationaryNStable out;
  StationaryDist prev =
      stationary(build_generator(spec, kind, n_start, BoundaryPolicy::ReflectToLast));
  for (int n = 2 * n_start; n <= n_max; n *= 2) {
    StationaryDist cur =
        stationary(build_generator(spec, kind, n, BoundaryPolicy::ReflectToLast));
    out.delta = std::abs(cur.mu[0] - prev.mu[0]);
    prev = std::move(cur);
    if (out.delta < tol) {
      out.dist = std::move(prev);
      out.stable = true;
      out.n_used = n;
      return out;
    }
  }
  out.dist = std::move(prev);
  out.n_used = n_max;
  return out;
}

/// Expected times to reach state 0, solved from sum_j q_ij h_j = -1 on the
/// absorbing truncation (h = 0 at state 0 and at the cemetery). The result
/// is a lower bound of the untruncated expectation, increasing in N.
struct HittingSolution {
  std::vector<double> h;  // indexed by state, h[0] = 0
  int truncation = 0;
};

inline HittingSolution hitting_times(const GeneratorMatrix& gen) {
  if (gen.boundary != BoundaryPolicy::AbsorbPastLast)
    throw std::invalid_argument("hitting_times: needs an absorbing truncation");
  if (!gen.rows[0].empty())
    throw std::invalid_argument("hitting_times: state 0 must be absorbing");
  const int n = gen.truncation;
  const int m = n - 1;  // unknowns: states 1..n-1
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 1; i < n; ++i)
    for (const auto& [col, v] : gen.rows[i])
      if (col >= 1 && col < n) trips.emplace_back(i - 1, col - 1, v);
  Eigen::SparseMatrix<double> a(m, m);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success)
    throw SingularSystem("hitting_times: no path to 0 in the truncation");
  Eigen::VectorXd rhs = Eigen::VectorXd::Constant(m, -1.0);
  Eigen::VectorXd x = lu.solve(rhs);
  HittingSolution out;
  out.truncation = n;
  out.h.assign(n, 0.0);
  for (int i = 1; i < n; ++i) {
    out.h[i] = x[i - 1];
    if (!(out.h[i] > 0.0))
      throw SingularSystem("hitting_times: nonpositive expected time");
  }
  return out;
}

struct HittingNStable {
  HittingSolution sol;
  bool stable = false;
  double delta = 0.0;
  int n_used = 0;
};

/// Doubles N until h_i for i <= watch changes by less than tol.
inline HittingNStable hitting_times_nstable(const ModelSpec& spec,
                                            int n_start = 128,
                                            double tol = 1e-6, int watch = 20,
                                            int n_max = 1 << 14) {
  HittingNStable out;
  HittingSolution prev = hitting_times(build_generator(
      spec, MatrixKind::ImmigrationAbsorbed, n_start, BoundaryPolicy::AbsorbPastLast));
  for (int n = 2 * n_start; n <= n_max; n *= 2) {
    HittingSolution cur = hitting_times(build_generator(
        spec, MatrixKind::ImmigrationAbsorbed, n, BoundaryPolicy::AbsorbPastLast));
    out.delta = 0.0;
    for (int i = 1; i <= watch && i < prev.truncation; ++i)
      out.delta = std::max(out.delta, std::abs(cur.h[i] - prev.h[i]));
    prev = std::move(cur);
    if (out.delta < tol) {
      out.sol = std::move(prev);
      out.stable = true;
      out.n_used = n;
      return out;
    }
  }
  out.sol = std::move(prev);
  out.n_used = n_max;
  return out;
}

/// Resolvent row phi_i.(lambda): solves (lambda I - Q) phi = e_i on the
/// authentic states. Strictly diagonally dominant for lambda > 0.
inline std::vector<double> resolvent(const GeneratorMatrix& gen, int i,
                                     double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("resolvent: lambda <= 0");
  const int n = gen.truncation;
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < n; ++r) {
    trips.emplace_back(r, r, lambda);
    for (const auto& [col, v] : gen.rows[r])
      if (col < n) trips.emplace_back(r, col, -v);
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success)
    throw SingularSystem("resolvent: factorization failed");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[i] = 1.0;
  Eigen::VectorXd x = lu.solve(rhs);
  return std::vector<double>(x.data(), x.data() + n);
}

namespace oracle_detail {

inline double poly_eval(const std::vector<double>& coeff, double s, int n) {
  double acc = 0.0;
  for (int j = n; j-- > 0;) acc = acc * s + coeff[j];
  return acc;
}

// sum_{j>=1} v_j j^theta s^{j-1}
inline double poly_weighted_eval(const std::vector<double>& v, double s,
                                 double theta, int n) {
  double acc = 0.0;
  for (int j = n; j-- > 1;)
    acc = acc * s + v[j] * std::pow(double(j), theta);
  return acc;
}

}  // namespace oracle_detail

/// Residual of the resolvent generating-function identity
///   lambda sum_j phi_ij s^j - s^i
///     = alpha B(s) sum_{j>=1} phi_ij j^theta s^{j-1}
///       - A(s) sum_{j>=1} phi_ij s^j
/// on the absorbed chain, max over the supplied s grid.
inline double resolvent_identity_residual(const ModelSpec& spec,
                                          const GeneratorMatrix& gen, int i,
                                          double lambda,
                                          const std::vector<double>& s_grid) {
  if (!spec.rate.is_power())
    throw std::invalid_argument("identity residual: needs a power rate");
  const double alpha = spec.rate.alpha(), theta = spec.rate.theta();
  const auto phi = resolvent(gen, i, lambda);
  const int n = gen.truncation;
  double worst = 0.0;
  for (double s : s_grid) {
    const double lhs =
        lambda * oracle_detail::poly_eval(phi, s, n) - std::pow(s, double(i));
    const double rhs =
        alpha * gen_fn_B(spec, s) *
            oracle_detail::poly_weighted_eval(phi, s, theta, n) -
        gen_fn_A(spec, s) * (oracle_detail::poly_eval(phi, s, n) - phi[0]);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

/// Residual of the transition generating-function identity
///   sum_j p'_ij(t) s^j = alpha B(s) sum_{j>=1} p_ij j^theta s^{j-1}
///                        - A(s) sum_{j>=1} p_ij s^j
/// with p' = p Q computed exactly on the truncation.
inline double forward_gf_residual(const ModelSpec& spec,
                                  const GeneratorMatrix& gen, int i, double t,
                                  const std::vector<double>& s_grid) {
  if (!spec.rate.is_power())
    throw std::invalid_argument("identity residual: needs a power rate");
  const double alpha = spec.rate.alpha(), theta = spec.rate.theta();
  const auto p = transition_probs(gen, i, t);
  const auto pdot = oracle_detail::left_apply(p, gen);
  const int n = gen.truncation;
  double worst = 0.0;
  for (double s : s_grid) {
    const double lhs = oracle_detail::poly_eval(pdot, s, n);
    const double rhs =
        alpha * gen_fn_B(spec, s) *
            oracle_detail::poly_weighted_eval(p, s, theta, n) -
        gen_fn_A(spec, s) * (oracle_detail::poly_eval(p, s, n) - p[0]);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

/// Residual of the stationary generating-function identity
///   Gamma(theta) f(s) = Gamma(theta) mu_0
///     + int_0^s A(y)/(alpha B(y)) (ln(s/y))^(theta-1) f(y) dy
/// for f the polynomial generating function of the solved mu.
inline double stationary_gf_residual(const ModelSpec& spec,
                                     const StationaryDist& dist,
                                     const std::vector<double>& s_grid) {
  if (!spec.rate.is_power())
    throw std::invalid_argument("identity residual: needs a power rate");
  const double alpha = spec.rate.alpha(), theta = spec.rate.theta();
  const double gamma_theta = std::tgamma(theta);
  const int n = int(dist.mu.size());
  double worst = 0.0;
  for (double s : s_grid) {
    auto integrand = [&](double y) {
      const double kern =
          theta == 1.0 ? 1.0 : std::pow(std::log(s / y), theta - 1.0);
      return gen_fn_A(spec, y) / (alpha * gen_fn_B(spec, y)) * kern *
             oracle_detail::poly_eval(dist.mu, y, n);
    };
    const double integral = adaptive_quad(integrand, 1e-30, s).value;
    const double lhs = gamma_theta * oracle_detail::poly_eval(dist.mu, s, n);
    const double rhs = gamma_theta * dist.mu[0] + integral;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

}  // namespace nlbranch

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlbranch {

/// Thrown when an integrand evaluates to a non-finite value at an interior
/// abscissa that was not declared as a split point.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double abscissa)
      : std::runtime_error(what + " at abscissa " + std::to_string(abscissa)),
        abscissa_(abscissa) {}
  double abscissa() const { return abscissa_; }

 private:
  double abscissa_;
};

namespace quad_detail {

// Gauss 7 / Kronrod 15 nodes and weights on [-1,1].
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct PanelResult {
  double value;
  double error;
};

template <class F>
PanelResult gk15(const F& f, double a, double b) {
  const double centr = 0.5 * (a + b);
  const double hlgth = 0.5 * (b - a);

  auto eval = [&](double x) {
    const double v = f(x);
    if (!std::isfinite(v))
      throw QuadratureError("non-finite integrand", x);
    return v;
  };

  const double fc = eval(centr);
  double resg = kWg[3] * fc;
  double resk = kWgk[7] * fc;
  double resabs = std::abs(resk);
  double fv[7];
  for (int j = 0; j < 7; ++j) {
    const double absc = hlgth * kXgk[j];
    const double f1 = eval(centr - absc);
    const double f2 = eval(centr + absc);
    const double fsum = f1 + f2;
    fv[j] = fsum;
    resk += kWgk[j] * fsum;
    resabs += kWgk[j] * (std::abs(f1) + std::abs(f2));
    if (j % 2 == 1) resg += kWg[j / 2] * fsum;
  }
  const double reskh = resk * 0.5;
  double resasc = kWgk[7] * std::abs(fc - reskh);
  for (int j = 0; j < 7; ++j)
    resasc += kWgk[j] * std::abs(fv[j] - 2.0 * reskh);
  resasc *= std::abs(hlgth);
  resabs *= std::abs(hlgth);

  double err = std::abs((resk - resg) * hlgth);
  if (resasc != 0.0 && err != 0.0)
    err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  const double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps))
    err = std::max(err, 50.0 * eps * resabs);
  return {resk * hlgth, err};
}

}  // namespace quad_detail

struct AdaptiveResult {
  double value;
  double error;  // accumulated error estimate
};

/// Adaptive Gauss-Kronrod integration over a finite interval. Panels are
/// bisected until the local error estimate passes the width-apportioned
/// absolute tolerance or the relative tolerance. Throws QuadratureError if
/// the integrand is non-finite at an evaluation point.
template <class F>
AdaptiveResult adaptive_quad(const F& f, double a, double b,
                             double abs_tol = 1e-12, double rel_tol = 1e-12,
                             int max_depth = 60) {
  if (!(b > a)) return {0.0, 0.0};
  struct Seg {
    double a, b;
    int depth;
  };
  std::vector<Seg> stack{{a, b, 0}};
  const double total_width = b - a;
  double sum = 0.0, err_sum = 0.0;
  while (!stack.empty()) {
    const Seg s = stack.back();
    stack.pop_back();
    const auto r = quad_detail::gk15(f, s.a, s.b);
    const double local_tol =
        std::max(abs_tol * (s.b - s.a) / total_width, rel_tol * std::abs(r.value));
    const double mid = 0.5 * (s.a + s.b);
    if (r.error <= local_tol || s.depth >= max_depth || mid <= s.a ||
        mid >= s.b) {
      sum += r.value;
      err_sum += r.error;
    } else {
      stack.push_back({s.a, mid, s.depth + 1});
      stack.push_back({mid, s.b, s.depth + 1});
    }
  }
  return {sum, err_sum};
}

struct LadderRung {
  double cutoff;   // epsilon_k: distance of the partial's upper limit from 1
  double partial;  // integral over [lo, 1 - epsilon_k]
};

/// Outcome of an improper integral over (lo, 1).
struct IntegralVerdict {
  enum class Status { Converged, Diverges, Inconclusive };

  Status status = Status::Inconclusive;
  double value = std::numeric_limits<double>::quiet_NaN();
  double abs_err = std::numeric_limits<double>::quiet_NaN();
  int sign = 0;  // +1 / -1 for Diverges
  std::vector<LadderRung> evidence;

  bool converged() const { return status == Status::Converged; }
  bool diverges() const { return status == Status::Diverges; }
  bool inconclusive() const { return status == Status::Inconclusive; }

  static const char* status_name(Status s) {
    switch (s) {
      case Status::Converged: return "converged";
      case Status::Diverges: return "diverges";
      default: return "inconclusive";
    }
  }
};

struct IntegrateToOneOptions {
  int start_rung = 4;
  int max_rung = 52;
  double cauchy_tol = 1e-9;       // converged: |increment| < max(tol, tol*|I|)
  int cauchy_runs = 3;            // ... for this many consecutive rungs
  double divergence_ratio = 0.9;  // diverges: |ratio| >= this
  int divergence_runs = 6;        // ... for this many consecutive rungs
  double panel_abs_tol = 1e-14;
  double panel_rel_tol = 1e-12;
};

/// Evaluate an improper integral of f over (lo, 1) where f may be singular
/// only as s -> 1 or at the caller-supplied interior split points. Partial
/// integrals are taken over [lo, 1 - eps_k] with a geometric cutoff ladder
/// eps_k = 2^-k (1 - lo). The increment sequence decides the verdict:
/// small increments mean convergence, ratios >= divergence_ratio with a
/// consistent sign certify divergence, and a stable geometric ratio at the
/// end of the ladder is completed with its geometric tail. Anything else is
/// reported as inconclusive.
template <class F>
IntegralVerdict integrate_to_one(const F& f, double lo,
                                 std::vector<double> splits = {},
                                 const IntegrateToOneOptions& opts = {}) {
  if (!(lo >= 0.0 && lo < 1.0))
    throw std::invalid_argument("integrate_to_one: lo must be in [0,1)");

  IntegralVerdict out;
  const double span = 1.0 - lo;
  auto cut = [&](int k) { return 1.0 - std::ldexp(span, -k); };

  // Base partial over [lo, cut(start_rung)], honoring interior splits.
  std::sort(splits.begin(), splits.end());
  double base_hi = cut(opts.start_rung);
  double partial = 0.0, panel_err = 0.0;
  {
    double seg_lo = lo;
    for (double sp : splits) {
      if (sp > seg_lo && sp < base_hi) {
        auto r = adaptive_quad(f, seg_lo, sp, opts.panel_abs_tol,
                               opts.panel_rel_tol);
        partial += r.value;
        panel_err += r.error;
        seg_lo = sp;
      }
    }
    auto r = adaptive_quad(f, seg_lo, base_hi, opts.panel_abs_tol,
                           opts.panel_rel_tol);
    partial += r.value;
    panel_err += r.error;
  }
  out.evidence.push_back({std::ldexp(span, -opts.start_rung), partial});

  std::vector<double> increments;
  int cauchy_count = 0;
  int ratio_count = 0;

  auto ratio_at = [&](std::size_t i) {  // increments[i] / increments[i-1]
    return increments[i] / increments[i - 1];
  };

  for (int k = opts.start_rung; k < opts.max_rung; ++k) {
    const double a = cut(k), b = cut(k + 1);
    if (!(b > a)) break;  // ladder exhausted in double precision
    auto r = adaptive_quad(f, a, b, opts.panel_abs_tol, opts.panel_rel_tol);
    const double delta = r.value;
    panel_err += r.error;
    partial += delta;
    increments.push_back(delta);
    out.evidence.push_back({std::ldexp(span, -(k + 1)), partial});

    // Convergence: increments negligible for cauchy_runs consecutive rungs.
    if (std::abs(delta) <
        std::max(opts.cauchy_tol, opts.cauchy_tol * std::abs(partial)))
      ++cauchy_count;
    else
      cauchy_count = 0;

    // Divergence: |ratio| >= divergence_ratio with consistent increment sign.
    if (increments.size() >= 2) {
      const double prev = increments[increments.size() - 2];
      const double rho = ratio_at(increments.size() - 1);
      const bool same_sign = (delta > 0 && prev > 0) || (delta < 0 && prev < 0);
      if (same_sign && std::abs(rho) >= opts.divergence_ratio)
        ++ratio_count;
      else
        ratio_count = 0;
    }

    if (ratio_count >= opts.divergence_runs) {
      out.status = IntegralVerdict::Status::Diverges;
      out.sign = delta > 0 ? +1 : -1;
      return out;
    }
    if (cauchy_count >= opts.cauchy_runs) break;
  }

  // Either the increments went quiet or the ladder ran out. Try to complete
  // the tail geometrically from the observed ratio window.
  const int window = 6;
  double rho_min = std::numeric_limits<double>::infinity();
  double rho_max = -std::numeric_limits<double>::infinity();
  int usable = 0;
  for (std::size_t i = increments.size(); i-- > 1 && usable < window;) {
    if (increments[i - 1] == 0.0 || increments[i] == 0.0) break;
    const double rho = ratio_at(i);
    if (!(rho > 0.0)) break;  // sign flip: stop the window
    rho_min = std::min(rho_min, rho);
    rho_max = std::max(rho_max, rho);
    ++usable;
  }

  const double last = increments.empty() ? 0.0 : increments.back();
  if (cauchy_count >= opts.cauchy_runs) {
    double tail = 0.0, tail_err = std::abs(last);
    if (usable >= 2 && rho_max < 1.0) {
      const double t_lo = last * rho_min / (1.0 - rho_min);
      const double t_hi = last * rho_max / (1.0 - rho_max);
      tail = 0.5 * (t_lo + t_hi);
      tail_err = 0.5 * std::abs(t_hi - t_lo) + std::abs(last) * 1e-3;
    }
    out.status = IntegralVerdict::Status::Converged;
    out.value = partial + tail;
    out.abs_err = std::max(tail_err + panel_err,
                           4.0 * std::numeric_limits<double>::epsilon() *
                               std::abs(out.value));
    return out;
  }

  if (usable >= window && rho_max < opts.divergence_ratio &&
      rho_max - rho_min < 0.05) {
    // Stable geometric decay all the way down the ladder: the integral
    // converges; complete it with the certified geometric tail.
    const double t_lo = last * rho_min / (1.0 - rho_min);
    const double t_hi = last * rho_max / (1.0 - rho_max);
    out.status = IntegralVerdict::Status::Converged;
    out.value = partial + 0.5 * (t_lo + t_hi);
    out.abs_err = std::max(0.5 * std::abs(t_hi - t_lo) + panel_err,
                           4.0 * std::numeric_limits<double>::epsilon() *
                               std::abs(out.value));
    return out;
  }

  out.status = IntegralVerdict::Status::Inconclusive;
  return out;
}

}  // namespace nlbranch

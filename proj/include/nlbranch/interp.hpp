#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace nlbranch {

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slope
/// limiting). Preserves monotonicity of the data, which is what the
/// tabulated inner integrals here require.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n)
      throw std::invalid_argument("interp: need >= 2 matching nodes");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1]))
        throw std::invalid_argument("interp: abscissae must increase");

    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    d_[0] = delta[0];
    d_[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) {
        d_[i] = 0.0;
      } else {
        const double w1 = 2.0 * h[i] + h[i - 1];
        const double w2 = h[i] + 2.0 * h[i - 1];
        d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
    // Endpoint slopes clamped to keep the first/last cell monotone.
    auto clamp_end = [](double d, double delta0) {
      if (delta0 == 0.0) return 0.0;
      if (d * delta0 <= 0.0) return 0.0;
      return std::abs(d) > 3.0 * std::abs(delta0) ? 3.0 * delta0 : d;
    };
    d_[0] = clamp_end(d_[0], delta[0]);
    d_[n - 1] = clamp_end(d_[n - 1], delta[n - 2]);
  }

  double min_x() const { return x_.front(); }
  double max_x() const { return x_.back(); }

  double operator()(double x) const {
    if (!(x >= x_.front() && x <= x_.back()))
      throw std::out_of_range("interp: abscissa outside node range");
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    const std::size_t i =
        std::min<std::size_t>(x_.size() - 2,
                              it == x_.begin() ? 0 : (it - x_.begin()) - 1);
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    return h00 * y_[i] + h * h10 * d_[i] + h01 * y_[i + 1] + h * h11 * d_[i + 1];
  }

 private:
  std::vector<double> x_, y_, d_;
};

}  // namespace nlbranch

#include "fairdemand/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "fairdemand/error.hpp"

namespace fairdemand::diff {

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double h) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double up = f(probe);
    probe[k] = orig - h;
    const double down = f(probe);
    probe[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw RuntimeFailure("finite differences: non-finite evaluation at coordinate " +
                           std::to_string(k));
    }
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) throw ValidationError("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace fairdemand::diff

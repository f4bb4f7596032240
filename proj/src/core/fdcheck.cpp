#include "rhm/core/fdcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace rhm::core {

double finite_difference_check(const std::function<TensorD(const TensorD&)>& fn,
                               const TensorD& point, double epsilon) {
  if (epsilon <= 0.0)
    throw std::invalid_argument("finite_difference_check: epsilon must be > 0");

  // analytic pass
  TensorD x = point.detach();
  x.set_requires_grad(true);
  TensorD y = fn(x);
  if (y.size() != 1)
    throw std::invalid_argument("finite_difference_check: fn must be scalar-valued, got " +
                                shape_str(y.shape()));
  ensure_finite(y, "finite_difference_check fn value");
  backward(y);
  if (!x.has_grad())
    throw std::runtime_error("finite_difference_check: fn does not depend on the probed point");
  std::vector<double> analytic(x.grad_view().begin(), x.grad_view().end());
  ensure_finite(std::span<const double>(analytic), "finite_difference_check analytic grad");

  auto eval = [&fn](const TensorD& p) {
    double v = fn(p).value();
    if (!std::isfinite(v))
      throw std::runtime_error("finite_difference_check: non-finite fn value during probing");
    return v;
  };

  double worst = 0.0;
  for (int64_t i = 0; i < point.size(); ++i) {
    TensorD probe = point.detach();
    double orig = probe.data()[i];
    probe.data()[i] = orig + epsilon;
    double fp = eval(probe);
    probe.data()[i] = orig - epsilon;
    double fm = eval(probe);
    double central = (fp - fm) / (2.0 * epsilon);
    double err = std::fabs(analytic[i] - central) / std::max(1e-8, std::fabs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace rhm::core

#include "lobg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lobg/errors.hpp"

namespace lobg {

double finite_diff_check_leaf(const std::function<Tensor()>& f, Tensor leaf, double h) {
  if (!(h > 0)) throw InvalidParameter("finite_diff_check: h must be > 0");
  const bool had_flag = leaf.requires_grad();
  if (!had_flag) leaf.set_requires_grad(true);
  leaf.zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
  leaf.zero_grad();

  auto vals = leaf.mutable_values();
  double worst = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + h;
    const double fp = f().item();
    vals[i] = orig - h;
    const double fm = f().item();
    vals[i] = orig;
    const double central = (fp - fm) / (2.0 * h);
    const double err = std::fabs(analytic[i] - central) / (std::fabs(analytic[i]) + std::fabs(central) + 1e-12);
    worst = std::max(worst, err);
  }
  if (!had_flag) leaf.set_requires_grad(false);
  return worst;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor leaf = Tensor::parameter(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  return finite_diff_check_leaf([&] { return f(leaf); }, leaf, h);
}

}  // namespace lobg

#include "lobg/optim.hpp"

#include <cmath>

#include "lobg/errors.hpp"

namespace lobg {

Optimizer::Optimizer(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw FrozenModelError("optimizer given a frozen (non-trainable) tensor");
    if (!p.is_leaf()) throw InvalidParameter("optimizer parameters must be leaves");
  }
}

void Optimizer::step() {
  begin_step();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    // Parameters can be frozen after the optimizer was built.
    if (!p.requires_grad()) throw FrozenModelError("gradient application on a frozen tensor rejected");
    if (!p.has_grad()) continue;
    update(i, p.mutable_values(), p.grad());
  }
  zero_grad();
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Sgd::update(std::size_t, std::span<double> value, std::span<const double> grad) {
  for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr_ * grad[i];
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params), lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::update(std::size_t index, std::span<double> value, std::span<const double> grad) {
  auto& m = m_[index];
  auto& v = v_[index];
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
    v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
    value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, std::vector<Tensor> params, double lr) {
  if (!(lr > 0)) throw InvalidParameter("learning rate must be > 0");
  if (kind == "sgd") return std::make_unique<Sgd>(std::move(params), lr);
  if (kind == "adam") return std::make_unique<Adam>(std::move(params), lr);
  throw InvalidParameter("unknown optimizer '" + kind + "' (expected sgd or adam)");
}

}  // namespace lobg

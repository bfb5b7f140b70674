#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lobg/tensor.hpp"

namespace lobg {

class Optimizer {
 public:
  // Every tensor must be a trainable leaf; a frozen tensor raises FrozenModelError.
  Optimizer(std::vector<Tensor> params, double lr);
  virtual ~Optimizer() = default;

  // Applies accumulated grads, then clears them.
  void step();
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 protected:
  virtual void update(std::size_t index, std::span<double> value, std::span<const double> grad) = 0;
  virtual void begin_step() {}

  std::vector<Tensor> params_;
  double lr_ = 0.0;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Tensor> params, double lr) : Optimizer(std::move(params), lr) {}

 private:
  void update(std::size_t, std::span<double> value, std::span<const double> grad) override;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

 private:
  void begin_step() override { ++t_; }
  void update(std::size_t index, std::span<double> value, std::span<const double> grad) override;

  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// "sgd" or "adam".
std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, std::vector<Tensor> params, double lr);

}  // namespace lobg

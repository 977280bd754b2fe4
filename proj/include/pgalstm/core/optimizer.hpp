#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pgalstm/core/params.hpp"
#include "pgalstm/core/tensor.hpp"
#include "pgalstm/errors.hpp"

namespace pgalstm {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias-corrected first and second moments.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  // Rejects the whole step (parameters and state untouched) if any gradient
  // is non-finite or misshapen.
  void step(ParamSet& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size()) {
      throw ShapeError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                       std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const auto& p = params.entry(i);
      if (grads[i].shape() != p.value.shape()) {
        throw ShapeError("optimizer: gradient shape " + shape_string(grads[i].shape()) +
                         " for parameter " + p.name + " of shape " + shape_string(p.value.shape()));
      }
      if (!grads[i].all_finite()) {
        throw NumericalError("optimizer: non-finite gradient for parameter " + p.name);
      }
    }
    if (m_.empty()) {
      for (const auto& e : params.entries()) {
        m_.emplace_back(e.value.shape(), 0.0);
        v_.emplace_back(e.value.shape(), 0.0);
      }
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      Tensor& w = params.entry(i).value;
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      const Tensor& g = grads[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
        v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        w[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace pgalstm

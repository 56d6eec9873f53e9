#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "panoseg/tensor.hpp"

namespace panoseg {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Parameters with no
// populated gradient are treated as having zero gradient.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, const std::vector<Tensor<T>>& params) : config_(config) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), T(0));
      v_.emplace_back(p.size(), T(0));
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

  void step(std::vector<Tensor<T>>& params) {
    ++t_;
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T corr1 = T(1) - static_cast<T>(std::pow(config_.beta1, static_cast<double>(t_)));
    const T corr2 = T(1) - static_cast<T>(std::pow(config_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(config_.lr);
    const T eps = static_cast<T>(config_.eps);
    for (size_t i = 0; i < params.size(); ++i) {
      auto& value = params[i].mutable_value();
      const bool has_grad = params[i].has_grad();
      const std::vector<T>* grad = has_grad ? &params[i].grad() : nullptr;
      for (size_t j = 0; j < value.size(); ++j) {
        const T g = grad ? (*grad)[j] : T(0);
        m_[i][j] = b1 * m_[i][j] + (T(1) - b1) * g;
        v_[i][j] = b2 * v_[i][j] + (T(1) - b2) * g * g;
        const T mhat = m_[i][j] / corr1;
        const T vhat = v_[i][j] / corr2;
        value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<std::vector<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace panoseg

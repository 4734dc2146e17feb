#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "microcnn/errors.hpp"
#include "microcnn/layers.hpp"
#include "microcnn/tensor.hpp"

namespace microcnn {

enum class optimizer_kind { sgd, adam };

struct optimizer_config {
  optimizer_kind kind = optimizer_kind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const {
    if (!(learning_rate > 0.0))
      throw config_error("learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw config_error("adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw config_error("adam epsilon must be positive");
  }

  std::string name() const {
    return kind == optimizer_kind::sgd ? "sgd" : "adam";
  }
};

inline optimizer_kind parse_optimizer(const std::string& name) {
  if (name == "sgd") return optimizer_kind::sgd;
  if (name == "adam") return optimizer_kind::adam;
  throw config_error("unknown optimizer '" + name + "' (valid: sgd, adam)");
}

// In-place parameter updates over a fixed set of (value, gradient) pairs.
// SGD: theta -= lr * g. Adam: bias-corrected moments, update
// theta -= lr * m_hat / (sqrt(v_hat) + eps). Updates are elementwise and
// deterministic; a non-finite gradient aborts the step.
template <class T>
class optimizer {
 public:
  explicit optimizer(const optimizer_config& cfg) : cfg_(cfg) {
    cfg_.validate();
  }

  const optimizer_config& config() const { return cfg_; }
  std::int64_t step_count() const { return steps_; }

  void step(const std::vector<typename model<T>::param_ref>& params) {
    for (const auto& p : params) {
      const T* g = p.grad->data();
      for (std::int64_t i = 0; i < p.grad->size(); ++i) {
        if (!std::isfinite(static_cast<double>(g[i])))
          throw divergence_error("non-finite gradient element");
      }
    }
    if (cfg_.kind == optimizer_kind::adam && m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(tensor<T>::zeros(p.value->shape()));
        v_.push_back(tensor<T>::zeros(p.value->shape()));
      }
    }
    ++steps_;
    const T lr = static_cast<T>(cfg_.learning_rate);
    if (cfg_.kind == optimizer_kind::sgd) {
      for (const auto& p : params) {
        T* theta = p.value->data();
        const T* g = p.grad->data();
        for (std::int64_t i = 0; i < p.value->size(); ++i)
          theta[i] -= lr * g[i];
      }
      return;
    }
    if (params.size() != m_.size())
      throw config_error("optimizer bound to a different parameter set");
    const T beta1 = static_cast<T>(cfg_.beta1);
    const T beta2 = static_cast<T>(cfg_.beta2);
    const T eps = static_cast<T>(cfg_.epsilon);
    const T mc = static_cast<T>(
        1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_))));
    const T vc = static_cast<T>(
        1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_))));
    for (std::size_t k = 0; k < params.size(); ++k) {
      T* theta = params[k].value->data();
      const T* g = params[k].grad->data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      for (std::int64_t i = 0; i < params[k].value->size(); ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        theta[i] -= lr * (m[i] * mc) / (std::sqrt(v[i] * vc) + eps);
      }
    }
  }

 private:
  optimizer_config cfg_;
  std::int64_t steps_ = 0;
  std::vector<tensor<T>> m_, v_;
};

}  // namespace microcnn

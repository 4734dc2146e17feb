#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "microcnn/errors.hpp"

namespace microcnn {

enum class act : int { relu, tanh, softplus, mish, softremish };

// Activation selector. alpha is the inner slope of softremish,
// f(x) = x * tanh(ln(1 + exp(alpha * x))), and is meaningless for every
// other kind; mish is the alpha = 1 member of the same family.
struct activation {
  act kind = act::relu;
  double alpha = 2.0;

  static activation make(act kind, double alpha = 2.0) {
    if (kind == act::softremish && !(alpha > 0.0)) {
      throw config_error("softremish alpha must be positive, got " +
                         std::to_string(alpha));
    }
    return activation{kind, kind == act::softremish ? alpha : 2.0};
  }

  bool has_alpha() const { return kind == act::softremish; }

  std::string name() const {
    switch (kind) {
      case act::relu: return "relu";
      case act::tanh: return "tanh";
      case act::softplus: return "softplus";
      case act::mish: return "mish";
      case act::softremish: return "softremish";
    }
    return "?";
  }
};

inline const std::vector<std::string>& activation_names() {
  static const std::vector<std::string> names = {"relu", "tanh", "softplus",
                                                 "mish", "softremish"};
  return names;
}

inline activation parse_activation(const std::string& name, double alpha = 2.0) {
  if (name == "relu") return activation::make(act::relu);
  if (name == "tanh") return activation::make(act::tanh);
  if (name == "softplus") return activation::make(act::softplus);
  if (name == "mish") return activation::make(act::mish);
  if (name == "softremish") return activation::make(act::softremish, alpha);
  std::string valid;
  for (const auto& n : activation_names()) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw config_error("unknown activation '" + name + "' (valid: " + valid + ")");
}

namespace detail {

// Switchover for the stable softplus evaluation, in units of a*x.
// exp(-20) ~ 2.1e-9, far below single-precision resolution.
inline constexpr double kSoftplusSwitch = 20.0;

// ln(1 + e^z) without overflow for large z.
template <class T>
inline T softplus_z(T z) {
  if (z > T(kSoftplusSwitch)) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

// 1 / (1 + e^-z), evaluated on the side that cannot overflow.
template <class T>
inline T logistic(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace detail

// ln(1 + e^(a*x)); requires a > 0.
template <class T>
inline T softplus_stable(T x, T a) {
  return detail::softplus_z(a * x);
}

template <class T>
inline T eval(const activation& k, T x) {
  switch (k.kind) {
    case act::relu:
      return x > T(0) ? x : T(0);
    case act::tanh:
      return std::tanh(x);
    case act::softplus:
      return detail::softplus_z(x);
    case act::mish:
      return x * std::tanh(detail::softplus_z(x));
    case act::softremish: {
      const T a = static_cast<T>(k.alpha);
      return x * std::tanh(detail::softplus_z(a * x));
    }
  }
  return T(0);
}

// First derivative. ReLU uses the subgradient convention f'(0) = 0.
// For the mish family, with s = ln(1 + e^(a*x)) and sigma the logistic:
//   f'(x) = tanh(s) + x * (1 - tanh(s)^2) * a * sigma(a*x)
template <class T>
inline T eval_d1(const activation& k, T x) {
  switch (k.kind) {
    case act::relu:
      return x > T(0) ? T(1) : T(0);
    case act::tanh: {
      const T t = std::tanh(x);
      return T(1) - t * t;
    }
    case act::softplus:
      return detail::logistic(x);
    case act::mish:
    case act::softremish: {
      const T a = k.kind == act::mish ? T(1) : static_cast<T>(k.alpha);
      const T t = std::tanh(detail::softplus_z(a * x));
      const T sig = detail::logistic(a * x);
      return t + x * (T(1) - t * t) * a * sig;
    }
  }
  return T(0);
}

// Second derivative, closed form. For the mish family, with
// s' = a*sigma and s'' = a^2*sigma*(1-sigma):
//   f''(x) = 2*(1-t^2)*s' + x*(1-t^2)*(s'' - 2*t*s'^2)
template <class T>
inline T eval_d2(const activation& k, T x) {
  switch (k.kind) {
    case act::relu:
      return T(0);
    case act::tanh: {
      const T t = std::tanh(x);
      return T(-2) * t * (T(1) - t * t);
    }
    case act::softplus: {
      const T sig = detail::logistic(x);
      return sig * (T(1) - sig);
    }
    case act::mish:
    case act::softremish: {
      const T a = k.kind == act::mish ? T(1) : static_cast<T>(k.alpha);
      const T t = std::tanh(detail::softplus_z(a * x));
      const T sig = detail::logistic(a * x);
      const T one_minus_t2 = T(1) - t * t;
      const T s1 = a * sig;
      const T s2 = a * a * sig * (T(1) - sig);
      return T(2) * one_minus_t2 * s1 +
             x * one_minus_t2 * (s2 - T(2) * t * s1 * s1);
    }
  }
  return T(0);
}

// Equally spaced samples of an activation or one of its derivatives.
struct activation_curve {
  activation kind;
  int order = 0;  // 0 = value, 1 = first derivative, 2 = second derivative
  std::vector<double> xs;
  std::vector<double> ys;
};

inline activation_curve sample_curve(const activation& k, int order,
                                     double xmin, double xmax,
                                     std::int64_t samples) {
  if (order < 0 || order > 2) {
    throw config_error("derivative order must be 0, 1 or 2, got " +
                       std::to_string(order));
  }
  if (samples < 2) {
    throw config_error("curve needs at least 2 samples, got " +
                       std::to_string(samples));
  }
  if (!(xmin < xmax)) {
    throw config_error("curve range is empty: [" + std::to_string(xmin) +
                       ", " + std::to_string(xmax) + ")");
  }
  activation_curve curve{k, order, {}, {}};
  curve.xs.resize(static_cast<std::size_t>(samples));
  curve.ys.resize(static_cast<std::size_t>(samples));
  const double step = (xmax - xmin) / static_cast<double>(samples - 1);
  for (std::int64_t i = 0; i < samples; ++i) {
    double x = xmin + static_cast<double>(i) * step;
    if (i == samples - 1) x = xmax;
    curve.xs[static_cast<std::size_t>(i)] = x;
    double y = 0.0;
    switch (order) {
      case 0: y = eval(k, x); break;
      case 1: y = eval_d1(k, x); break;
      case 2: y = eval_d2(k, x); break;
    }
    curve.ys[static_cast<std::size_t>(i)] = y;
  }
  return curve;
}

}  // namespace microcnn

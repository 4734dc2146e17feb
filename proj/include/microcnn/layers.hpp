#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "microcnn/activations.hpp"
#include "microcnn/errors.hpp"
#include "microcnn/rng.hpp"
#include "microcnn/tensor.hpp"

namespace microcnn {

enum class layer_kind { conv2d, maxpool2d, flatten, dense, softmax_output };

// Declarative description of one layer. Image tensors are NHWC
// ([batch, height, width, channels]); convolution is cross-correlation with
// valid padding and stride 1; pooling windows do not overlap (stride equals
// the window) and trailing rows/columns that do not fill a window are dropped.
struct layer_spec {
  layer_kind kind = layer_kind::flatten;
  std::int64_t filters = 0, kernel_h = 0, kernel_w = 0;  // conv2d
  std::int64_t pool_h = 0, pool_w = 0;                   // maxpool2d
  std::int64_t units = 0;                                // dense
  std::int64_t classes = 0;                              // softmax_output
  activation act;                                        // conv2d, dense

  static layer_spec conv2d(std::int64_t filters, std::int64_t kernel_h,
                           std::int64_t kernel_w, const activation& act) {
    if (filters < 1 || kernel_h < 1 || kernel_w < 1)
      throw shape_error("conv2d needs positive filter count and kernel extents");
    layer_spec s;
    s.kind = layer_kind::conv2d;
    s.filters = filters;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.act = act;
    return s;
  }

  static layer_spec maxpool2d(std::int64_t pool_h, std::int64_t pool_w) {
    if (pool_h < 1 || pool_w < 1)
      throw shape_error("maxpool2d needs positive window extents");
    layer_spec s;
    s.kind = layer_kind::maxpool2d;
    s.pool_h = pool_h;
    s.pool_w = pool_w;
    return s;
  }

  static layer_spec flatten() {
    layer_spec s;
    s.kind = layer_kind::flatten;
    return s;
  }

  static layer_spec dense(std::int64_t units, const activation& act) {
    if (units < 1) throw shape_error("dense needs a positive unit count");
    layer_spec s;
    s.kind = layer_kind::dense;
    s.units = units;
    s.act = act;
    return s;
  }

  static layer_spec softmax_output(std::int64_t classes) {
    if (classes < 1) throw shape_error("softmax output needs positive classes");
    layer_spec s;
    s.kind = layer_kind::softmax_output;
    s.classes = classes;
    return s;
  }

  std::string name() const {
    switch (kind) {
      case layer_kind::conv2d: return "conv2d";
      case layer_kind::maxpool2d: return "maxpool2d";
      case layer_kind::flatten: return "flatten";
      case layer_kind::dense: return "dense";
      case layer_kind::softmax_output: return "softmax_output";
    }
    return "?";
  }
};

// Parameters, gradients and the forward cache of one instantiated layer.
// The cache is written by a training-mode forward pass and consumed by the
// matching backward pass.
template <class T>
struct layer_state {
  layer_spec spec;
  tensor<T> weights;
  tensor<T> biases;
  tensor<T> grad_weights;
  tensor<T> grad_biases;

  bool has_cache = false;
  shape_list input_shape;
  tensor<T> columns;    // conv2d: im2col matrix; dense-like: input
  tensor<T> preact;     // pre-activation values
  tensor<T> act_tanh;   // mish family: tanh(softplus(alpha * z))
  std::vector<std::int64_t> pool_src;  // maxpool2d: flat source index per output

  std::int64_t parameter_count() const {
    return (weights.empty() ? 0 : weights.size()) +
           (biases.empty() ? 0 : biases.size());
  }
};

namespace detail {

// Fused activation application. For the mish family the tanh factor is the
// expensive part of both the value and the derivative, so it is returned for
// caching; for plain tanh the output itself doubles as the cache.
template <class T>
struct act_result {
  tensor<T> value;
  tensor<T> tanh_cache;
};

template <class T>
act_result<T> activation_apply(const activation& k, const tensor<T>& z) {
  const std::size_t n = static_cast<std::size_t>(z.size());
  const T* pz = z.data();
  std::vector<T> out(n);
  switch (k.kind) {
    case act::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = pz[i] > T(0) ? pz[i] : T(0);
      return {tensor<T>::from_values(z.shape(), std::move(out)), {}};
    case act::tanh: {
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(pz[i]);
      auto value = tensor<T>::from_values(z.shape(), std::move(out));
      return {value, value};
    }
    case act::softplus:
      for (std::size_t i = 0; i < n; ++i) out[i] = softplus_z(pz[i]);
      return {tensor<T>::from_values(z.shape(), std::move(out)), {}};
    case act::mish:
    case act::softremish: {
      const T a = k.kind == act::mish ? T(1) : static_cast<T>(k.alpha);
      std::vector<T> tcache(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T t = std::tanh(softplus_z(a * pz[i]));
        tcache[i] = t;
        out[i] = pz[i] * t;
      }
      return {tensor<T>::from_values(z.shape(), std::move(out)),
              tensor<T>::from_values(z.shape(), std::move(tcache))};
    }
  }
  return {tensor<T>::from_values(z.shape(), std::move(out)), {}};
}

// grad_z = grad_out * act'(z), reusing the cached tanh factors. Matches
// eval_d1 pointwise; the unit tests assert the two routes agree.
template <class T>
tensor<T> activation_grad(const activation& k, const tensor<T>& z,
                          const tensor<T>& tanh_cache,
                          const tensor<T>& grad_out) {
  const std::size_t n = static_cast<std::size_t>(z.size());
  const T* pz = z.data();
  const T* pg = grad_out.data();
  std::vector<T> out(n);
  switch (k.kind) {
    case act::relu:
      for (std::size_t i = 0; i < n; ++i)
        out[i] = pz[i] > T(0) ? pg[i] : T(0);
      break;
    case act::tanh: {
      const T* pt = tanh_cache.data();
      for (std::size_t i = 0; i < n; ++i)
        out[i] = pg[i] * (T(1) - pt[i] * pt[i]);
      break;
    }
    case act::softplus:
      for (std::size_t i = 0; i < n; ++i) out[i] = pg[i] * logistic(pz[i]);
      break;
    case act::mish:
    case act::softremish: {
      const T a = k.kind == act::mish ? T(1) : static_cast<T>(k.alpha);
      const T* pt = tanh_cache.data();
      for (std::size_t i = 0; i < n; ++i) {
        const T t = pt[i];
        const T sig = logistic(a * pz[i]);
        out[i] = pg[i] * (t + pz[i] * (T(1) - t * t) * a * sig);
      }
      break;
    }
  }
  return tensor<T>::from_values(z.shape(), std::move(out));
}

// Unrolls every kernel-sized patch of an NHWC batch into one row:
// [b, h, w, c] -> [b*oh*ow, kh*kw*c] with (dy, dx, channel) row layout.
template <class T>
tensor<T> im2col(const tensor<T>& input, std::int64_t kh, std::int64_t kw) {
  const std::int64_t b = input.extent(0), h = input.extent(1),
                     w = input.extent(2), c = input.extent(3);
  const std::int64_t oh = h - kh + 1, ow = w - kw + 1;
  const std::int64_t patch = kh * kw * c;
  tensor<T> cols = tensor<T>::zeros({b * oh * ow, patch});
  const T* src = input.data();
  T* dst = cols.data();
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        T* row = dst + (((n * oh) + i) * ow + j) * patch;
        for (std::int64_t dy = 0; dy < kh; ++dy) {
          const T* run = src + (((n * h) + i + dy) * w + j) * c;
          std::memcpy(row + dy * kw * c, run,
                      static_cast<std::size_t>(kw * c) * sizeof(T));
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds column rows back onto the input grid.
template <class T>
tensor<T> col2im(const tensor<T>& cols, const shape_list& input_shape,
                 std::int64_t kh, std::int64_t kw) {
  const std::int64_t b = input_shape[0], h = input_shape[1],
                     w = input_shape[2], c = input_shape[3];
  const std::int64_t oh = h - kh + 1, ow = w - kw + 1;
  const std::int64_t patch = kh * kw * c;
  tensor<T> out = tensor<T>::zeros(input_shape);
  const T* src = cols.data();
  T* dst = out.data();
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        const T* row = src + (((n * oh) + i) * ow + j) * patch;
        for (std::int64_t dy = 0; dy < kh; ++dy) {
          T* run = dst + (((n * h) + i + dy) * w + j) * c;
          const T* prow = row + dy * kw * c;
          for (std::int64_t m = 0; m < kw * c; ++m) run[m] += prow[m];
        }
      }
    }
  }
  return out;
}

template <class T>
void add_row_bias(tensor<T>& m, const tensor<T>& bias) {
  const std::int64_t rows = m.extent(0), cols = m.extent(1);
  T* p = m.data();
  const T* pb = bias.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) p[r * cols + c] += pb[c];
}

template <class T>
tensor<T> column_sums(const tensor<T>& m) {
  const std::int64_t rows = m.extent(0), cols = m.extent(1);
  tensor<T> out = tensor<T>::zeros({cols});
  const T* p = m.data();
  T* po = out.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) po[c] += p[r * cols + c];
  return out;
}

template <class T>
void check_image_input(const tensor<T>& input, const char* who) {
  if (input.rank() != 4)
    throw shape_error(std::string(who) + " expects [batch, h, w, channels], got " +
                      shape_str(input.shape()));
}

}  // namespace detail

// Glorot-uniform initialization: weights ~ U(-L, L) with
// L = sqrt(6 / (fan_in + fan_out)), biases zero, fully determined by seed.
// fan_in_extent is the incoming channel count (conv) or feature count (dense).
template <class T>
layer_state<T> init_params(const layer_spec& spec, std::int64_t fan_in_extent,
                           std::uint64_t seed) {
  layer_state<T> st;
  st.spec = spec;
  shape_list wshape;
  std::int64_t fan_in = 0, fan_out = 0, bias_count = 0;
  switch (spec.kind) {
    case layer_kind::conv2d:
      wshape = {spec.kernel_h, spec.kernel_w, fan_in_extent, spec.filters};
      fan_in = spec.kernel_h * spec.kernel_w * fan_in_extent;
      fan_out = spec.kernel_h * spec.kernel_w * spec.filters;
      bias_count = spec.filters;
      break;
    case layer_kind::dense:
      wshape = {fan_in_extent, spec.units};
      fan_in = fan_in_extent;
      fan_out = spec.units;
      bias_count = spec.units;
      break;
    case layer_kind::softmax_output:
      wshape = {fan_in_extent, spec.classes};
      fan_in = fan_in_extent;
      fan_out = spec.classes;
      bias_count = spec.classes;
      break;
    case layer_kind::maxpool2d:
    case layer_kind::flatten:
      return st;
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  rng r(seed);
  std::vector<T> w(static_cast<std::size_t>(detail::shape_product(wshape)));
  for (auto& v : w) v = static_cast<T>(r.next_symmetric(limit));
  st.weights = tensor<T>::from_values(wshape, std::move(w));
  st.biases = tensor<T>::zeros({bias_count});
  st.grad_weights = tensor<T>::zeros(wshape);
  st.grad_biases = tensor<T>::zeros({bias_count});
  return st;
}

// ---- conv2d -----------------------------------------------------------

template <class T>
tensor<T> conv2d_forward(const tensor<T>& input, layer_state<T>& st,
                         bool training = true) {
  detail::check_image_input(input, "conv2d");
  const std::int64_t h = input.extent(1), w = input.extent(2),
                     c = input.extent(3);
  const layer_spec& spec = st.spec;
  if (c != st.weights.extent(2))
    throw shape_error("conv2d channel mismatch: input has " + std::to_string(c) +
                      ", weights expect " + std::to_string(st.weights.extent(2)));
  if (h < spec.kernel_h || w < spec.kernel_w)
    throw shape_error("conv2d kernel " + std::to_string(spec.kernel_h) + "x" +
                      std::to_string(spec.kernel_w) + " larger than input " +
                      std::to_string(h) + "x" + std::to_string(w));
  const std::int64_t b = input.extent(0);
  const std::int64_t oh = h - spec.kernel_h + 1, ow = w - spec.kernel_w + 1;
  tensor<T> cols = detail::im2col(input, spec.kernel_h, spec.kernel_w);
  tensor<T> w2 = st.weights.reshaped(
      {spec.kernel_h * spec.kernel_w * c, spec.filters});
  tensor<T> z2 = matmul(cols, w2);
  detail::add_row_bias(z2, st.biases);
  tensor<T> z = z2.reshaped({b, oh, ow, spec.filters});
  auto activated = detail::activation_apply(spec.act, z);
  if (training) {
    st.columns = std::move(cols);
    st.preact = std::move(z);
    st.act_tanh = std::move(activated.tanh_cache);
    st.input_shape = input.shape();
    st.has_cache = true;
  }
  return std::move(activated.value);
}

template <class T>
tensor<T> conv2d_backward(const tensor<T>& grad_out, layer_state<T>& st) {
  if (!st.has_cache)
    throw ordering_error("conv2d backward without a cached forward pass");
  if (!grad_out.same_shape(st.preact))
    throw shape_error("conv2d grad shape " + detail::shape_str(grad_out.shape()) +
                      " does not match forward output " +
                      detail::shape_str(st.preact.shape()));
  const layer_spec& spec = st.spec;
  const std::int64_t c = st.input_shape[3];
  const std::int64_t rows = st.columns.extent(0);
  tensor<T> dz = detail::activation_grad(spec.act, st.preact, st.act_tanh,
                                         grad_out);
  tensor<T> dz2 = dz.reshaped({rows, spec.filters});
  st.grad_biases = detail::column_sums(dz2);
  tensor<T> gw2 = matmul(st.columns, dz2, /*trans_a=*/true);
  st.grad_weights =
      gw2.reshaped({spec.kernel_h, spec.kernel_w, c, spec.filters});
  tensor<T> w2 = st.weights.reshaped(
      {spec.kernel_h * spec.kernel_w * c, spec.filters});
  tensor<T> dcols = matmul(dz2, w2, /*trans_a=*/false, /*trans_b=*/true);
  tensor<T> grad_in =
      detail::col2im(dcols, st.input_shape, spec.kernel_h, spec.kernel_w);
  st.has_cache = false;
  return grad_in;
}

// ---- maxpool2d --------------------------------------------------------

template <class T>
tensor<T> maxpool_forward(const tensor<T>& input, layer_state<T>& st,
                          bool training = true) {
  detail::check_image_input(input, "maxpool2d");
  const layer_spec& spec = st.spec;
  const std::int64_t b = input.extent(0), h = input.extent(1),
                     w = input.extent(2), c = input.extent(3);
  if (h < spec.pool_h || w < spec.pool_w)
    throw shape_error("pool window larger than input");
  const std::int64_t oh = h / spec.pool_h, ow = w / spec.pool_w;
  tensor<T> out = tensor<T>::zeros({b, oh, ow, c});
  std::vector<std::int64_t> src_index(static_cast<std::size_t>(out.size()));
  const T* src = input.data();
  T* dst = out.data();
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t i = 0; i < oh; ++i) {
      for (std::int64_t j = 0; j < ow; ++j) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          std::int64_t best_idx = -1;
          T best = T(0);
          for (std::int64_t dy = 0; dy < spec.pool_h; ++dy) {
            for (std::int64_t dx = 0; dx < spec.pool_w; ++dx) {
              const std::int64_t idx =
                  (((n * h) + i * spec.pool_h + dy) * w + j * spec.pool_w + dx) *
                      c +
                  ch;
              // ties keep the first element in row-major window order
              if (best_idx < 0 || src[idx] > best) {
                best = src[idx];
                best_idx = idx;
              }
            }
          }
          const std::int64_t out_idx = (((n * oh) + i) * ow + j) * c + ch;
          dst[out_idx] = best;
          src_index[static_cast<std::size_t>(out_idx)] = best_idx;
        }
      }
    }
  }
  if (training) {
    st.pool_src = std::move(src_index);
    st.input_shape = input.shape();
    st.has_cache = true;
  }
  return out;
}

template <class T>
tensor<T> maxpool_backward(const tensor<T>& grad_out, layer_state<T>& st) {
  if (!st.has_cache)
    throw ordering_error("maxpool backward without a cached forward pass");
  if (std::cmp_not_equal(st.pool_src.size(), grad_out.size()))
    throw shape_error("maxpool grad size does not match forward output");
  tensor<T> grad_in = tensor<T>::zeros(st.input_shape);
  T* dst = grad_in.data();
  const T* src = grad_out.data();
  for (std::size_t i = 0; i < st.pool_src.size(); ++i)
    dst[st.pool_src[i]] += src[i];
  st.has_cache = false;
  return grad_in;
}

// ---- flatten ----------------------------------------------------------

template <class T>
tensor<T> flatten_forward(const tensor<T>& input, layer_state<T>& st,
                          bool training = true) {
  if (input.rank() < 2)
    throw shape_error("flatten expects a leading batch axis");
  const std::int64_t b = input.extent(0);
  const std::int64_t rest = input.size() / b;
  if (training) {
    st.input_shape = input.shape();
    st.has_cache = true;
  }
  return input.reshaped({b, rest});
}

template <class T>
tensor<T> flatten_backward(const tensor<T>& grad_out, layer_state<T>& st) {
  if (!st.has_cache)
    throw ordering_error("flatten backward without a cached forward pass");
  st.has_cache = false;
  return grad_out.reshaped(st.input_shape);
}

// ---- dense / softmax output affine ------------------------------------

template <class T>
tensor<T> dense_forward(const tensor<T>& input, layer_state<T>& st,
                        bool training = true) {
  if (input.rank() != 2)
    throw shape_error("dense expects [batch, features], got " +
                      detail::shape_str(input.shape()));
  if (input.extent(1) != st.weights.extent(0))
    throw shape_error("dense feature mismatch: input " +
                      std::to_string(input.extent(1)) + ", weights " +
                      std::to_string(st.weights.extent(0)));
  tensor<T> z = matmul(input, st.weights);
  detail::add_row_bias(z, st.biases);
  const bool is_output = st.spec.kind == layer_kind::softmax_output;
  detail::act_result<T> activated;
  if (is_output) {
    activated.value = z;  // logits pass through; softmax lives in the loss
  } else {
    activated = detail::activation_apply(st.spec.act, z);
  }
  if (training) {
    st.columns = input;
    st.preact = std::move(z);
    st.act_tanh = std::move(activated.tanh_cache);
    st.input_shape = input.shape();
    st.has_cache = true;
  }
  return std::move(activated.value);
}

template <class T>
tensor<T> dense_backward(const tensor<T>& grad_out, layer_state<T>& st) {
  if (!st.has_cache)
    throw ordering_error("dense backward without a cached forward pass");
  if (!grad_out.same_shape(st.preact))
    throw shape_error("dense grad shape does not match forward output");
  const bool is_output = st.spec.kind == layer_kind::softmax_output;
  tensor<T> dz = is_output ? grad_out
                           : detail::activation_grad(st.spec.act, st.preact,
                                                     st.act_tanh, grad_out);
  st.grad_weights = matmul(st.columns, dz, /*trans_a=*/true);
  st.grad_biases = detail::column_sums(dz);
  tensor<T> grad_in = matmul(dz, st.weights, /*trans_a=*/false,
                             /*trans_b=*/true);
  st.has_cache = false;
  return grad_in;
}

// ---- softmax + categorical cross-entropy ------------------------------

template <class T>
struct xent_result {
  double loss = 0.0;
  tensor<T> grad_logits;
};

// Row-stable softmax with mean negative log-likelihood over the batch.
// grad = (softmax - onehot) / batch.
template <class T>
xent_result<T> softmax_xent(const tensor<T>& logits,
                            std::span<const std::int64_t> labels) {
  if (logits.rank() != 2)
    throw shape_error("softmax_xent expects [batch, classes] logits");
  const std::int64_t b = logits.extent(0), classes = logits.extent(1);
  if (std::cmp_not_equal(labels.size(), b))
    throw shape_error("label count " + std::to_string(labels.size()) +
                      " does not match batch " + std::to_string(b));
  tensor<T> grad = tensor<T>::zeros({b, classes});
  const T* pz = logits.data();
  T* pg = grad.data();
  double loss_sum = 0.0;
  const T inv_b = T(1) / static_cast<T>(b);
  for (std::int64_t r = 0; r < b; ++r) {
    const std::int64_t label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes)
      throw value_error("label " + std::to_string(label) +
                        " outside [0, " + std::to_string(classes) + ")");
    const T* row = pz + r * classes;
    T m = row[0];
    for (std::int64_t c = 1; c < classes; ++c) m = row[c] > m ? row[c] : m;
    double sum = 0.0;
    for (std::int64_t c = 0; c < classes; ++c)
      sum += std::exp(static_cast<double>(row[c] - m));
    const double log_sum = std::log(sum);
    loss_sum += log_sum + static_cast<double>(m) - static_cast<double>(row[label]);
    T* grow = pg + r * classes;
    for (std::int64_t c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(row[c] - m)) / sum;
      grow[c] = static_cast<T>(p) * inv_b;
    }
    grow[label] -= inv_b;
  }
  return {loss_sum / static_cast<double>(b), std::move(grad)};
}

// ---- whole-network dispatch -------------------------------------------

template <class T>
tensor<T> layer_forward(layer_state<T>& st, const tensor<T>& input,
                        bool training = true) {
  switch (st.spec.kind) {
    case layer_kind::conv2d: return conv2d_forward(input, st, training);
    case layer_kind::maxpool2d: return maxpool_forward(input, st, training);
    case layer_kind::flatten: return flatten_forward(input, st, training);
    case layer_kind::dense:
    case layer_kind::softmax_output: return dense_forward(input, st, training);
  }
  throw error("unreachable layer kind");
}

template <class T>
tensor<T> layer_backward(layer_state<T>& st, const tensor<T>& grad_out) {
  switch (st.spec.kind) {
    case layer_kind::conv2d: return conv2d_backward(grad_out, st);
    case layer_kind::maxpool2d: return maxpool_backward(grad_out, st);
    case layer_kind::flatten: return flatten_backward(grad_out, st);
    case layer_kind::dense:
    case layer_kind::softmax_output: return dense_backward(grad_out, st);
  }
  throw error("unreachable layer kind");
}

// A stack of layers owned by one training run. forward(training=true) caches
// what backward needs; backward fills every grad_* and returns the gradient
// with respect to the network input.
template <class T>
struct model {
  std::vector<layer_state<T>> layers;

  tensor<T> forward(const tensor<T>& input, bool training = true) {
    tensor<T> x = input;
    for (auto& layer : layers) x = layer_forward(layer, x, training);
    return x;
  }

  tensor<T> backward(const tensor<T>& grad_logits) {
    tensor<T> g = grad_logits;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      g = layer_backward(*it, g);
    return g;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& layer : layers) n += layer.parameter_count();
    return n;
  }

  struct param_ref {
    tensor<T>* value;
    tensor<T>* grad;
  };

  std::vector<param_ref> trainable() {
    std::vector<param_ref> refs;
    for (auto& layer : layers) {
      if (layer.weights.empty()) continue;
      refs.push_back({&layer.weights, &layer.grad_weights});
      refs.push_back({&layer.biases, &layer.grad_biases});
    }
    return refs;
  }
};

}  // namespace microcnn

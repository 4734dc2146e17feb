#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "microcnn/activations.hpp"
#include "microcnn/errors.hpp"
#include "microcnn/layers.hpp"
#include "microcnn/mnist.hpp"
#include "microcnn/optim.hpp"
#include "microcnn/tensor.hpp"

namespace microcnn {

enum class data_source_kind { mnist_dir, synthetic };

struct data_source {
  data_source_kind kind = data_source_kind::synthetic;
  std::string dir;             // mnist_dir
  std::int64_t synthetic_n = 0;

  static data_source mnist(std::string dir) {
    return {data_source_kind::mnist_dir, std::move(dir), 0};
  }
  static data_source synthetic(std::int64_t n) {
    return {data_source_kind::synthetic, {}, n};
  }
};

struct train_config {
  activation act = activation::make(act::softremish, 2.0);
  bool sweep_dense = true;  // false keeps the hidden dense layer on relu
  std::int64_t epochs = 10;
  std::int64_t batch_size = 128;
  std::uint64_t seed = 1;
  optimizer_config opt;
  bool deterministic = true;
  data_source data;

  void validate() const {
    if (epochs < 1) throw config_error("epochs must be at least 1");
    if (batch_size < 1) throw config_error("batch size must be at least 1");
    if (data.kind == data_source_kind::synthetic && data.synthetic_n < 10)
      throw config_error("synthetic dataset needs at least 10 samples");
    opt.validate();
  }
};

struct epoch_metrics {
  std::int64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct train_report {
  train_config config;
  std::vector<epoch_metrics> epochs;
  double max_val_accuracy = 0.0;
  double min_train_loss = 0.0;
  double min_val_loss = 0.0;
  double wall_time_seconds = 0.0;
};

// The benchmark architecture for 28x28x1 inputs:
//   conv 32@3x3 -> pool 2x2 -> conv 64@3x3 -> pool 2x2 -> flatten
//   -> dense 128 -> softmax over 10 classes.
// The chosen activation runs in both conv layers and, when sweep_dense is
// set, in the hidden dense layer (otherwise that layer keeps relu). The
// output layer is always a plain softmax.
template <class T = float>
model<T> build_model(const activation& act, bool sweep_dense,
                     std::uint64_t seed) {
  const activation dense_act =
      sweep_dense ? act : activation::make(act::relu);
  const std::vector<layer_spec> specs = {
      layer_spec::conv2d(32, 3, 3, act),
      layer_spec::maxpool2d(2, 2),
      layer_spec::conv2d(64, 3, 3, act),
      layer_spec::maxpool2d(2, 2),
      layer_spec::flatten(),
      layer_spec::dense(128, dense_act),
      layer_spec::softmax_output(10),
  };
  // fan-in extents along the 28x28x1 pipeline
  const std::vector<std::int64_t> fan_in = {1, 0, 32, 0, 0, 5 * 5 * 64, 128};
  model<T> m;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    m.layers.push_back(init_params<T>(specs[i], fan_in[i],
                                      mix_seed(seed, 0xc0de0000ull + i)));
  }
  return m;
}

// Forward-only pass over a dataset: (mean cross-entropy, argmax accuracy).
template <class T>
std::pair<double, double> evaluate(model<T>& m, const dataset<T>& ds,
                                   std::int64_t batch_size = 256) {
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  for (const auto& idx :
       batch_indices(ds.size(), batch_size, /*shuffle=*/false, 0)) {
    const auto batch = take_batch(ds, idx);
    tensor<T> logits = m.forward(batch.images, /*training=*/false);
    const auto result = softmax_xent(logits, batch.labels);
    loss_sum += result.loss * static_cast<double>(idx.size());
    const auto predicted = argmax_last_axis(logits);
    for (std::size_t k = 0; k < predicted.size(); ++k)
      if (predicted[k] == batch.labels[k]) ++correct;
  }
  const double n = static_cast<double>(ds.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

// Loads the configured data source as a (train, validation) pair. The MNIST
// test split doubles as the validation set; a synthetic source holds out its
// trailing 10% (at least one sample).
template <class T = float>
std::pair<dataset<T>, dataset<T>> load_datasets(const data_source& source) {
  if (source.kind == data_source_kind::mnist_dir) {
    return {load_mnist_split<T>(source.dir, split_tag::train),
            load_mnist_split<T>(source.dir, split_tag::test)};
  }
  const dataset<T> full = synthetic_dataset<T>(42, source.synthetic_n);
  const std::int64_t n = full.size();
  const std::int64_t held_out = std::max<std::int64_t>(1, n / 10);
  const std::int64_t train_n = n - held_out;
  const auto slice = [&](std::int64_t start, std::int64_t count,
                         split_tag tag) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i)
      idx[static_cast<std::size_t>(i)] = start + i;
    auto view = take_batch(full, idx);
    dataset<T> out;
    out.images = std::move(view.images);
    out.labels = std::move(view.labels);
    out.split = tag;
    return out;
  };
  return {slice(0, train_n, split_tag::train),
          slice(train_n, held_out, split_tag::test)};
}

// One seeded training run: per epoch, shuffled mini-batches with forward,
// cross-entropy, backward and an optimizer step, then a validation pass.
// Fails fast with a divergence_error if the loss or a gradient goes
// non-finite. train_loss is the mean of batch means.
template <class T = float>
train_report train(const train_config& cfg, const dataset<T>& train_set,
                   const dataset<T>& val_set) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  model<T> m = build_model<T>(cfg.act, cfg.sweep_dense, cfg.seed);
  optimizer<T> opt(cfg.opt);
  auto params = m.trainable();
  train_report report;
  report.config = cfg;
  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double batch_loss_sum = 0.0;
    std::int64_t batch_count = 0;
    const auto plan = batch_indices(train_set.size(), cfg.batch_size,
                                    /*shuffle=*/true, cfg.seed, epoch - 1);
    for (const auto& idx : plan) {
      const auto batch = take_batch(train_set, idx);
      tensor<T> logits = m.forward(batch.images, /*training=*/true);
      auto result = softmax_xent(logits, batch.labels);
      if (!std::isfinite(result.loss))
        throw divergence_error("training loss became non-finite", epoch,
                               batch_count);
      m.backward(result.grad_logits);
      try {
        opt.step(params);
      } catch (const divergence_error& e) {
        throw divergence_error(e.what(), epoch, batch_count);
      }
      batch_loss_sum += result.loss;
      ++batch_count;
    }
    epoch_metrics metrics;
    metrics.epoch = epoch;
    metrics.train_loss = batch_loss_sum / static_cast<double>(batch_count);
    const auto [val_loss, val_accuracy] = evaluate(m, val_set, cfg.batch_size);
    metrics.val_loss = val_loss;
    metrics.val_accuracy = val_accuracy;
    report.epochs.push_back(metrics);
  }
  report.max_val_accuracy = 0.0;
  report.min_train_loss = std::numeric_limits<double>::infinity();
  report.min_val_loss = std::numeric_limits<double>::infinity();
  for (const auto& e : report.epochs) {
    report.max_val_accuracy = std::max(report.max_val_accuracy, e.val_accuracy);
    report.min_train_loss = std::min(report.min_train_loss, e.train_loss);
    report.min_val_loss = std::min(report.min_val_loss, e.val_loss);
  }
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

// Convenience wrapper: load the configured data source, then train.
template <class T = float>
train_report run_training(const train_config& cfg) {
  cfg.validate();
  const auto [train_set, val_set] = load_datasets<T>(cfg.data);
  return train<T>(cfg, train_set, val_set);
}

}  // namespace microcnn

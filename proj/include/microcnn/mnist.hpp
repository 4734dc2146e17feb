#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "microcnn/errors.hpp"
#include "microcnn/rng.hpp"
#include "microcnn/tensor.hpp"

namespace microcnn {

// IDX container header: 4-byte big-endian magic, then one 4-byte big-endian
// extent per dimension. Magic 2051 (0x00000803) = 3-d image file,
// magic 2049 (0x00000801) = 1-d label file.
struct idx_header {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::size_t header_bytes = 0;
};

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

namespace detail {

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_be32(std::uint32_t v, std::vector<std::uint8_t>& out) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline idx_header parse_idx_header(std::span<const std::uint8_t> bytes,
                                   std::uint32_t expected_magic,
                                   std::size_t expected_dims) {
  if (bytes.size() < 4)
    throw truncation_error("idx stream shorter than its magic number");
  idx_header h;
  h.magic = detail::read_be32(bytes.data());
  if (h.magic != expected_magic)
    throw format_error("bad idx magic " + std::to_string(h.magic) +
                       ", expected " + std::to_string(expected_magic));
  h.header_bytes = 4 + 4 * expected_dims;
  if (bytes.size() < h.header_bytes)
    throw truncation_error("idx header truncated: expected " +
                           std::to_string(h.header_bytes) + " bytes, got " +
                           std::to_string(bytes.size()));
  for (std::size_t d = 0; d < expected_dims; ++d)
    h.dims.push_back(detail::read_be32(bytes.data() + 4 + 4 * d));
  return h;
}

struct raw_images {
  std::int64_t count = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols bytes
};

inline raw_images parse_idx_images(std::span<const std::uint8_t> bytes) {
  const idx_header h = parse_idx_header(bytes, kIdxImageMagic, 3);
  raw_images imgs;
  imgs.count = h.dims[0];
  imgs.rows = h.dims[1];
  imgs.cols = h.dims[2];
  const std::size_t expected =
      static_cast<std::size_t>(imgs.count) * imgs.rows * imgs.cols;
  const std::size_t actual = bytes.size() - h.header_bytes;
  if (actual < expected)
    throw truncation_error("idx image payload truncated: expected " +
                           std::to_string(expected) + " bytes, got " +
                           std::to_string(actual));
  if (actual > expected)
    throw format_error("idx image stream has " +
                       std::to_string(actual - expected) + " trailing bytes");
  imgs.pixels.assign(bytes.begin() + h.header_bytes, bytes.end());
  return imgs;
}

inline std::vector<std::uint8_t> parse_idx_labels(
    std::span<const std::uint8_t> bytes) {
  const idx_header h = parse_idx_header(bytes, kIdxLabelMagic, 1);
  const std::size_t expected = h.dims[0];
  const std::size_t actual = bytes.size() - h.header_bytes;
  if (actual < expected)
    throw truncation_error("idx label payload truncated: expected " +
                           std::to_string(expected) + " bytes, got " +
                           std::to_string(actual));
  if (actual > expected)
    throw format_error("idx label stream has " +
                       std::to_string(actual - expected) + " trailing bytes");
  std::vector<std::uint8_t> labels(bytes.begin() + h.header_bytes, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9)
      throw value_error("label byte " + std::to_string(labels[i]) +
                        " at index " + std::to_string(i) + " exceeds 9");
  }
  return labels;
}

// Transparently unwraps a gzip container, detected by its 0x1f 0x8b signature.
inline std::vector<std::uint8_t> maybe_gunzip(std::vector<std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b)
    return bytes;
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK)
    throw format_error("could not initialize gzip decoder");
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> buffer(1 << 16);
  zs.next_in = bytes.data();
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  do {
    zs.next_out = buffer.data();
    zs.avail_out = static_cast<uInt>(buffer.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw format_error("corrupt gzip stream (zlib error " +
                         std::to_string(rc) + ")");
    }
    out.insert(out.end(), buffer.data(),
               buffer.data() + (buffer.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

enum class split_tag { train, test };

// Images scaled to [0, 1] with shape [n, rows, cols, 1] plus label vector.
template <class T = float>
struct dataset {
  tensor<T> images;
  std::vector<std::int64_t> labels;
  split_tag split = split_tag::train;

  std::int64_t size() const {
    return static_cast<std::int64_t>(labels.size());
  }
};

// pixel / 255 with a trailing channel axis.
template <class T = float>
tensor<T> normalize(const raw_images& raw) {
  std::vector<T> values(raw.pixels.size());
  constexpr T scale = T(1) / T(255);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i)
    values[i] = static_cast<T>(raw.pixels[i]) * scale;
  return tensor<T>::from_values({raw.count, raw.rows, raw.cols, 1},
                                std::move(values));
}

template <class T = float>
dataset<T> make_dataset(const raw_images& raw,
                        const std::vector<std::uint8_t>& labels,
                        split_tag split) {
  if (std::cmp_not_equal(labels.size(), raw.count))
    throw format_error("image count " + std::to_string(raw.count) +
                       " does not match label count " +
                       std::to_string(labels.size()));
  dataset<T> ds;
  ds.images = normalize<T>(raw);
  ds.labels.assign(labels.begin(), labels.end());
  ds.split = split;
  return ds;
}

namespace detail {

inline std::filesystem::path find_idx_file(const std::filesystem::path& dir,
                                           const std::string& stem) {
  const auto plain = dir / stem;
  if (std::filesystem::exists(plain)) return plain;
  const auto gz = dir / (stem + ".gz");
  if (std::filesystem::exists(gz)) return gz;
  throw config_error("missing data file " + plain.string() + "[.gz]");
}

}  // namespace detail

// Loads one split from a directory holding the canonical MNIST file names,
// raw or gzip-compressed.
template <class T = float>
dataset<T> load_mnist_split(const std::filesystem::path& dir, split_tag split) {
  if (!std::filesystem::is_directory(dir))
    throw config_error("data directory " + dir.string() + " not found");
  const std::string prefix = split == split_tag::train ? "train" : "t10k";
  const auto image_path =
      detail::find_idx_file(dir, prefix + "-images-idx3-ubyte");
  const auto label_path =
      detail::find_idx_file(dir, prefix + "-labels-idx1-ubyte");
  const raw_images raw = parse_idx_images(maybe_gunzip(read_file(image_path)));
  if (raw.rows != 28 || raw.cols != 28)
    throw format_error("expected 28x28 images, got " +
                       std::to_string(raw.rows) + "x" +
                       std::to_string(raw.cols));
  const auto labels = parse_idx_labels(maybe_gunzip(read_file(label_path)));
  return make_dataset<T>(raw, labels, split);
}

// ---- batching ----------------------------------------------------------

// Index partition for one epoch. The permutation depends only on
// (seed, epoch); shuffle=false keeps the original order.
inline std::vector<std::vector<std::int64_t>> batch_indices(
    std::int64_t n, std::int64_t batch_size, bool shuffle, std::uint64_t seed,
    std::int64_t epoch = 0) {
  if (batch_size < 1)
    throw config_error("batch size must be at least 1");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  if (shuffle) {
    rng r(mix_seed(seed, 0x9a7c0000ull + static_cast<std::uint64_t>(epoch)));
    r.shuffle(order);
  }
  std::vector<std::vector<std::int64_t>> out;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t stop = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return out;
}

template <class T>
struct batch_view {
  tensor<T> images;
  std::vector<std::int64_t> labels;
};

template <class T>
batch_view<T> take_batch(const dataset<T>& ds,
                         std::span<const std::int64_t> indices) {
  const auto& shape = ds.images.shape();
  const std::int64_t sample = ds.images.size() / shape[0];
  std::vector<T> values(static_cast<std::size_t>(indices.size() * sample));
  std::vector<std::int64_t> labels(indices.size());
  const T* src = ds.images.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::int64_t i = indices[k];
    std::memcpy(values.data() + k * sample, src + i * sample,
                static_cast<std::size_t>(sample) * sizeof(T));
    labels[k] = ds.labels[static_cast<std::size_t>(i)];
  }
  shape_list bshape = shape;
  bshape[0] = static_cast<std::int64_t>(indices.size());
  return {tensor<T>::from_values(bshape, std::move(values)), std::move(labels)};
}

// Materialized epoch: every sample exactly once, last batch may be short.
template <class T>
std::vector<batch_view<T>> batches(const dataset<T>& ds,
                                   std::int64_t batch_size, bool shuffle,
                                   std::uint64_t seed, std::int64_t epoch = 0) {
  std::vector<batch_view<T>> out;
  for (const auto& idx : batch_indices(ds.size(), batch_size, shuffle, seed,
                                       epoch))
    out.push_back(take_batch(ds, idx));
  return out;
}

// ---- synthetic stand-in dataset ----------------------------------------

// Deterministic 10-class geometric dataset for tests and offline runs.
// Class k selects one of five positions on a circle (k mod 5) and a filled
// or hollow square (k div 5); samples get a seeded translation jitter,
// brightness scale and Gaussian pixel noise. Labels cycle 0..9 so any
// window whose length is a multiple of 10 is class-balanced.
template <class T = float>
dataset<T> synthetic_dataset(std::uint64_t seed, std::int64_t n) {
  if (n < 1) throw config_error("synthetic dataset needs n >= 1");
  constexpr std::int64_t side = 28;
  constexpr double radius = 8.0;
  constexpr std::int64_t half = 4;
  dataset<T> ds;
  ds.split = split_tag::train;
  std::vector<T> values(static_cast<std::size_t>(n * side * side));
  ds.labels.resize(static_cast<std::size_t>(n));
  rng r(mix_seed(seed, 0x5d474000ull));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t label = i % 10;
    ds.labels[static_cast<std::size_t>(i)] = label;
    const std::int64_t position = label % 5;
    const bool hollow = label >= 5;
    const double angle =
        2.0 * 3.141592653589793 * static_cast<double>(position) / 5.0;
    const std::int64_t jy = static_cast<std::int64_t>(r.next_below(5)) - 2;
    const std::int64_t jx = static_cast<std::int64_t>(r.next_below(5)) - 2;
    const std::int64_t cy =
        static_cast<std::int64_t>(std::lround(14.0 + radius * std::sin(angle))) +
        jy;
    const std::int64_t cx =
        static_cast<std::int64_t>(std::lround(14.0 + radius * std::cos(angle))) +
        jx;
    const double brightness = r.next_in(0.6, 1.0);
    T* img = values.data() + i * side * side;
    for (std::int64_t y = 0; y < side; ++y) {
      for (std::int64_t x = 0; x < side; ++x) {
        const std::int64_t dy = y - cy, dx = x - cx;
        const bool inside =
            dy >= -half && dy <= half && dx >= -half && dx <= half;
        const bool rim = inside && (std::abs(dy) >= half - 1 ||
                                    std::abs(dx) >= half - 1);
        double v = 0.0;
        if (inside && (!hollow || rim)) v = brightness;
        v += 0.08 * r.next_normal();
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        img[y * side + x] = static_cast<T>(v);
      }
    }
  }
  ds.images = tensor<T>::from_values({n, side, side, 1}, std::move(values));
  return ds;
}

}  // namespace microcnn

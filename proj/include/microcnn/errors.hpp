#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace microcnn {

// Base class for every error this library throws.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatches in tensor and layer operations.
struct shape_error : error {
  using error::error;
};

// Out-of-range values: bad class labels, label bytes above 9.
struct value_error : error {
  using error::error;
};

// Unusable configuration: bad flags, bad config files, invalid ranges.
struct config_error : error {
  using error::error;
};

// Malformed IDX streams: wrong magic, wrong rank, trailing bytes.
struct format_error : error {
  using error::error;
};

// Streams shorter than their header declares.
struct truncation_error : format_error {
  using format_error::format_error;
};

// Backward pass invoked without a matching forward pass.
struct ordering_error : error {
  using error::error;
};

// Non-finite loss or gradient encountered during training.
struct divergence_error : error {
  explicit divergence_error(const std::string& what, std::int64_t epoch = -1,
                            std::int64_t batch = -1)
      : error(what), epoch(epoch), batch(batch) {}

  std::int64_t epoch;
  std::int64_t batch;
};

}  // namespace microcnn

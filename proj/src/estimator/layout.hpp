#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "esotune/estimator.hpp"

namespace esotune::detail {

inline constexpr int kInputChannels = 3;

// Row-major (out x in). Offsets index the flat parameter vector.
struct DenseLayer {
  std::size_t w = 0;
  std::size_t b = 0;
  int in = 0;
  int out = 0;
};

// Weight row-major (out x kernel*in), column index j*in + c for tap j, channel c.
struct ConvLayer {
  std::size_t w = 0;
  std::size_t b = 0;
  int in = 0;
  int out = 0;
  int kernel = 0;
  int length = 0;      // input = conv output length ("same" padding)
  int pooled = 0;      // length after pooling
};

struct NetLayout {
  std::vector<ConvLayer> conv;
  int pool = 2;
  int flat = 0;
  DenseLayer transient_fc;
  std::array<DenseLayer, 2> lambda_fc;
  std::array<DenseLayer, 2> aux_fc;
  std::array<DenseLayer, 3> head;
  int concat = 0;
};

/// Registers every parameter of `cfg` in `store` (when non-null) in a fixed
/// order and returns the offsets.
NetLayout build_layout(const EstimatorConfig& cfg, ParameterStore* store);

/// Offsets of an existing model; verifies the store matches the config.
NetLayout layout_of(const EstimatorModel& model);

/// Network input in [0, 1]; lambda sorted ascending before use.
std::array<double, 3> sorted_lambda(const EstimatorInput& in);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline constexpr double kOutputMargin = 1e-15;

}  // namespace esotune::detail

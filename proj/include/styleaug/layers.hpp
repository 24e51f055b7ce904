#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "styleaug/tensor.hpp"

namespace styleaug {

// ---------------------------------------------------------------------------
// Layer descriptions
// ---------------------------------------------------------------------------

struct Conv {
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool operator==(const Conv&) const = default;
};
struct ReLU {
  bool operator==(const ReLU&) const = default;
};
struct MaxPool {
  std::size_t k = 2;
  std::size_t stride = 2;
  bool operator==(const MaxPool&) const = default;
};
struct AvgPool {
  std::size_t k = 2;
  std::size_t stride = 2;
  bool operator==(const AvgPool&) const = default;
};
struct Flatten {
  bool operator==(const Flatten&) const = default;
};
struct Dense {
  std::size_t out_features = 0;
  bool operator==(const Dense&) const = default;
};
struct Dropout {
  float rate = 0.5f;
  bool operator==(const Dropout&) const = default;
};
struct Softmax {
  bool operator==(const Softmax&) const = default;
};

using LayerKind =
    std::variant<Conv, ReLU, MaxPool, AvgPool, Flatten, Dense, Dropout, Softmax>;

/// Throws ConfigError when a kernel/stride is zero or the dropout rate is
/// outside [0, 1). Padding may be zero.
void validate_layer(const LayerKind& kind);
std::string layer_name(const LayerKind& kind);

/// Output shape of `kind` for an input of shape `in`, or ShapeMismatch.
Shape layer_output_shape(const LayerKind& kind, const Shape& in);

// ---------------------------------------------------------------------------
// Convolution, zero padding, cross-correlation convention.
// ---------------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, std::size_t stride,
                      std::size_t padding);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, std::size_t stride,
                          std::size_t padding);

/// Input gradient only; skips the weight/bias products.
Tensor conv2d_backward_input(const Tensor& input, const Tensor& weights,
                             const Tensor& grad_output, std::size_t stride,
                             std::size_t padding);

// ---------------------------------------------------------------------------
// Elementwise and pooling
// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

/// Ties go to the lowest flat index within each window.
Tensor maxpool_forward(const Tensor& input, std::size_t k, std::size_t stride);
Tensor maxpool_backward(const Tensor& input, const Tensor& grad_output,
                        std::size_t k, std::size_t stride);

Tensor avgpool_forward(const Tensor& input, std::size_t k, std::size_t stride);
Tensor avgpool_backward(const Tensor& input, const Tensor& grad_output,
                        std::size_t k, std::size_t stride);

// ---------------------------------------------------------------------------
// Dense, softmax, dropout
// ---------------------------------------------------------------------------

/// input [in], weights [out, in], bias [out] -> [out]
Tensor dense_forward(const Tensor& input, const Tensor& weights,
                     const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output);

/// Softmax over the whole tensor (treated as a flat vector).
Tensor softmax_forward(const Tensor& input);
Tensor softmax_backward(const Tensor& output, const Tensor& grad_output);

enum class Mode { kEval, kTrain };

/// Inverted dropout. The keep mask is a pure function of (seed, element
/// index), so forward and backward agree without storing state. Identity in
/// eval mode.
Tensor dropout_forward(const Tensor& input, float rate, std::uint64_t seed,
                       Mode mode);
Tensor dropout_backward(const Tensor& grad_output, float rate,
                        std::uint64_t seed, Mode mode);

}  // namespace styleaug

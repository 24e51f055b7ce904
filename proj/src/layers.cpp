#include "styleaug/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "styleaug/errors.hpp"
#include "styleaug/rng.hpp"

namespace styleaug {

namespace {

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::size_t pooled_extent(std::size_t in, std::size_t k, std::size_t stride,
                          const char* context) {
  if (in < k) {
    throw ShapeMismatch(std::string(context) + ": window " + std::to_string(k) +
                        " larger than extent " + std::to_string(in));
  }
  return (in - k) / stride + 1;
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t out_channels, kh, kw;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weights,
                           std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  if (stride == 0) throw ShapeMismatch("conv2d: stride must be positive");
  ConvGeometry g{};
  g.channels = input.dim(0);
  g.height = input.dim(1);
  g.width = input.dim(2);
  g.out_channels = weights.dim(0);
  g.kh = weights.dim(2);
  g.kw = weights.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (weights.dim(1) != g.channels) {
    throw ShapeMismatch("conv2d: weights expect " +
                        std::to_string(weights.dim(1)) +
                        " input channels, input has " +
                        std::to_string(g.channels));
  }
  if (g.height + 2 * padding < g.kh || g.width + 2 * padding < g.kw) {
    throw ShapeMismatch("conv2d: kernel " + shape_to_string(weights.shape()) +
                        " does not fit padded input " +
                        shape_to_string(input.shape()));
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;
  return g;
}

// Column matrix [C*kh*kw, out_h*out_w]; out-of-range taps read zero.
RowMatrix im2col(const Tensor& input, const ConvGeometry& g) {
  RowMatrix cols(g.patch(), g.positions());
  const float* src = input.data().data();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::size_t row = (c * g.kh + ky) * g.kw + kx;
        float* dst = cols.row(row).data();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.padding);
            float v = 0.0f;
            if (iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                ix < static_cast<long>(g.width)) {
              v = src[(c * g.height + iy) * g.width + ix];
            }
            dst[oy * g.out_w + ox] = v;
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const RowMatrix& cols, const ConvGeometry& g) {
  Tensor out({g.channels, g.height, g.width});
  float* dst = out.data().data();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::size_t row = (c * g.kh + ky) * g.kw + kx;
        const float* src = cols.row(row).data();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            dst[(c * g.height + iy) * g.width + ix] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
  return out;
}

void check_grad_output(const Tensor& grad_output, const Shape& expected,
                       const char* context) {
  if (grad_output.shape() != expected) {
    throw ShapeMismatch(std::string(context) + ": grad_output shape " +
                        shape_to_string(grad_output.shape()) +
                        " differs from forward output " +
                        shape_to_string(expected));
  }
}

struct PoolGeometry {
  std::size_t channels, height, width, out_h, out_w, k, stride;
};

PoolGeometry pool_geometry(const Tensor& input, std::size_t k,
                           std::size_t stride, const char* context) {
  require_rank(input, 3, context);
  if (k == 0 || stride == 0) {
    throw ShapeMismatch(std::string(context) +
                        ": window and stride must be positive");
  }
  PoolGeometry g{input.dim(0), input.dim(1), input.dim(2), 0, 0, k, stride};
  g.out_h = pooled_extent(g.height, k, stride, context);
  g.out_w = pooled_extent(g.width, k, stride, context);
  return g;
}

// Flat input index of the window maximum; strict comparison keeps the first
// (lowest index) element on ties.
std::size_t window_argmax(const Tensor& input, const PoolGeometry& g,
                          std::size_t c, std::size_t oy, std::size_t ox) {
  std::size_t best = (c * g.height + oy * g.stride) * g.width + ox * g.stride;
  float best_value = input[best];
  for (std::size_t ky = 0; ky < g.k; ++ky) {
    for (std::size_t kx = 0; kx < g.k; ++kx) {
      const std::size_t idx =
          (c * g.height + oy * g.stride + ky) * g.width + ox * g.stride + kx;
      if (input[idx] > best_value) {
        best_value = input[idx];
        best = idx;
      }
    }
  }
  return best;
}

float dropout_keep_scale(float rate, std::uint64_t seed, std::size_t index) {
  const float u = bits_to_unit(mix64(seed ^ mix64(index)));
  return u < rate ? 0.0f : 1.0f / (1.0f - rate);
}

void check_dropout_rate(float rate) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void validate_layer(const LayerKind& kind) {
  std::visit(
      Overloaded{
          [](const Conv& c) {
            if (c.out_channels == 0 || c.kernel_h == 0 || c.kernel_w == 0 ||
                c.stride == 0) {
              throw ConfigError(
                  "conv: out_channels, kernel and stride must be positive");
            }
          },
          [](const MaxPool& p) {
            if (p.k == 0 || p.stride == 0)
              throw ConfigError("maxpool: window and stride must be positive");
          },
          [](const AvgPool& p) {
            if (p.k == 0 || p.stride == 0)
              throw ConfigError("avgpool: window and stride must be positive");
          },
          [](const Dense& d) {
            if (d.out_features == 0)
              throw ConfigError("dense: out_features must be positive");
          },
          [](const Dropout& d) { check_dropout_rate(d.rate); },
          [](const auto&) {},
      },
      kind);
}

std::string layer_name(const LayerKind& kind) {
  return std::visit(Overloaded{
                        [](const Conv&) { return std::string("conv"); },
                        [](const ReLU&) { return std::string("relu"); },
                        [](const MaxPool&) { return std::string("maxpool"); },
                        [](const AvgPool&) { return std::string("avgpool"); },
                        [](const Flatten&) { return std::string("flatten"); },
                        [](const Dense&) { return std::string("dense"); },
                        [](const Dropout&) { return std::string("dropout"); },
                        [](const Softmax&) { return std::string("softmax"); },
                    },
                    kind);
}

Shape layer_output_shape(const LayerKind& kind, const Shape& in) {
  auto need_rank = [&](std::size_t r, const char* what) {
    if (in.size() != r) {
      throw ShapeMismatch(std::string(what) + " expects rank " +
                          std::to_string(r) + " input, got " +
                          shape_to_string(in));
    }
  };
  return std::visit(
      Overloaded{
          [&](const Conv& c) -> Shape {
            need_rank(3, "conv");
            if (in[1] + 2 * c.padding < c.kernel_h ||
                in[2] + 2 * c.padding < c.kernel_w) {
              throw ShapeMismatch("conv: kernel larger than padded input " +
                                  shape_to_string(in));
            }
            return {c.out_channels,
                    (in[1] + 2 * c.padding - c.kernel_h) / c.stride + 1,
                    (in[2] + 2 * c.padding - c.kernel_w) / c.stride + 1};
          },
          [&](const MaxPool& p) -> Shape {
            need_rank(3, "maxpool");
            return {in[0], pooled_extent(in[1], p.k, p.stride, "maxpool"),
                    pooled_extent(in[2], p.k, p.stride, "maxpool")};
          },
          [&](const AvgPool& p) -> Shape {
            need_rank(3, "avgpool");
            return {in[0], pooled_extent(in[1], p.k, p.stride, "avgpool"),
                    pooled_extent(in[2], p.k, p.stride, "avgpool")};
          },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
          [&](const Dense& d) -> Shape {
            need_rank(1, "dense");
            return {d.out_features};
          },
          [&](const auto&) -> Shape { return in; },
      },
      kind);
}

// ---------------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, std::size_t stride,
                      std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  if (bias.shape() != Shape{g.out_channels}) {
    throw ShapeMismatch("conv2d: bias shape " + shape_to_string(bias.shape()) +
                        " does not match " + std::to_string(g.out_channels) +
                        " output channels");
  }
  const RowMatrix cols = im2col(input, g);
  ConstMatrixMap w(weights.data().data(), g.out_channels, g.patch());
  Tensor out({g.out_channels, g.out_h, g.out_w});
  MatrixMap o(out.data().data(), g.out_channels, g.positions());
  o.noalias() = w * cols;
  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    o.row(oc).array() += bias[oc];
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output, std::size_t stride,
                          std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  check_grad_output(grad_output, {g.out_channels, g.out_h, g.out_w},
                    "conv2d_backward");
  const RowMatrix cols = im2col(input, g);
  ConstMatrixMap w(weights.data().data(), g.out_channels, g.patch());
  ConstMatrixMap go(grad_output.data().data(), g.out_channels, g.positions());

  ConvGrads grads;
  grads.weights = Tensor(weights.shape());
  MatrixMap gw(grads.weights.data().data(), g.out_channels, g.patch());
  gw.noalias() = go * cols.transpose();

  grads.bias = Tensor({g.out_channels});
  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    grads.bias[oc] = go.row(oc).sum();
  }

  RowMatrix grad_cols = w.transpose() * go;
  grads.input = col2im(grad_cols, g);
  return grads;
}

Tensor conv2d_backward_input(const Tensor& input, const Tensor& weights,
                             const Tensor& grad_output, std::size_t stride,
                             std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  check_grad_output(grad_output, {g.out_channels, g.out_h, g.out_w},
                    "conv2d_backward");
  ConstMatrixMap w(weights.data().data(), g.out_channels, g.patch());
  ConstMatrixMap go(grad_output.data().data(), g.out_channels, g.positions());
  RowMatrix grad_cols = w.transpose() * go;
  return col2im(grad_cols, g);
}

// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  require_same_shape(input, grad_output, "relu_backward");
  Tensor out = grad_output;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(input[i] > 0.0f)) out[i] = 0.0f;
  }
  return out;
}

Tensor maxpool_forward(const Tensor& input, std::size_t k, std::size_t stride) {
  const PoolGeometry g = pool_geometry(input, k, stride, "maxpool");
  Tensor out({g.channels, g.out_h, g.out_w});
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        out.at(c, oy, ox) = input[window_argmax(input, g, c, oy, ox)];
  return out;
}

Tensor maxpool_backward(const Tensor& input, const Tensor& grad_output,
                        std::size_t k, std::size_t stride) {
  const PoolGeometry g = pool_geometry(input, k, stride, "maxpool");
  check_grad_output(grad_output, {g.channels, g.out_h, g.out_w},
                    "maxpool_backward");
  Tensor grad(input.shape());
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        grad[window_argmax(input, g, c, oy, ox)] += grad_output.at(c, oy, ox);
  return grad;
}

Tensor avgpool_forward(const Tensor& input, std::size_t k, std::size_t stride) {
  const PoolGeometry g = pool_geometry(input, k, stride, "avgpool");
  const float inv = 1.0f / static_cast<float>(k * k);
  Tensor out({g.channels, g.out_h, g.out_w});
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        float s = 0.0f;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            s += input.at(c, oy * stride + ky, ox * stride + kx);
        out.at(c, oy, ox) = s * inv;
      }
    }
  }
  return out;
}

Tensor avgpool_backward(const Tensor& input, const Tensor& grad_output,
                        std::size_t k, std::size_t stride) {
  const PoolGeometry g = pool_geometry(input, k, stride, "avgpool");
  check_grad_output(grad_output, {g.channels, g.out_h, g.out_w},
                    "avgpool_backward");
  const float inv = 1.0f / static_cast<float>(k * k);
  Tensor grad(input.shape());
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const float v = grad_output.at(c, oy, ox) * inv;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            grad.at(c, oy * stride + ky, ox * stride + kx) += v;
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------

Tensor dense_forward(const Tensor& input, const Tensor& weights,
                     const Tensor& bias) {
  require_rank(input, 1, "dense input");
  require_rank(weights, 2, "dense weights");
  const std::size_t out_features = weights.dim(0);
  if (weights.dim(1) != input.dim(0) || bias.shape() != Shape{out_features}) {
    throw ShapeMismatch("dense: weights " + shape_to_string(weights.shape()) +
                        ", bias " + shape_to_string(bias.shape()) +
                        " incompatible with input " +
                        shape_to_string(input.shape()));
  }
  ConstMatrixMap w(weights.data().data(), out_features, input.dim(0));
  Eigen::Map<const Eigen::VectorXf> x(input.data().data(), input.size());
  Eigen::Map<const Eigen::VectorXf> b(bias.data().data(), out_features);
  Tensor out({out_features});
  Eigen::Map<Eigen::VectorXf>(out.data().data(), out_features).noalias() =
      w * x + b;
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_output) {
  require_rank(input, 1, "dense input");
  require_rank(weights, 2, "dense weights");
  const std::size_t out_features = weights.dim(0);
  const std::size_t in_features = input.dim(0);
  if (weights.dim(1) != in_features) {
    throw ShapeMismatch("dense: weights " + shape_to_string(weights.shape()) +
                        " incompatible with input " +
                        shape_to_string(input.shape()));
  }
  check_grad_output(grad_output, {out_features}, "dense_backward");
  ConstMatrixMap w(weights.data().data(), out_features, in_features);
  Eigen::Map<const Eigen::VectorXf> x(input.data().data(), in_features);
  Eigen::Map<const Eigen::VectorXf> go(grad_output.data().data(),
                                       out_features);
  DenseGrads grads;
  grads.weights = Tensor(weights.shape());
  MatrixMap(grads.weights.data().data(), out_features, in_features).noalias() =
      go * x.transpose();
  grads.bias = grad_output;
  grads.input = Tensor({in_features});
  Eigen::Map<Eigen::VectorXf>(grads.input.data().data(), in_features)
      .noalias() = w.transpose() * go;
  return grads;
}

Tensor softmax_forward(const Tensor& input) {
  Tensor out = input;
  float m = -std::numeric_limits<float>::infinity();
  for (float v : input.data()) m = std::max(m, v);
  double total = 0.0;
  for (float& v : out.data()) {
    v = std::exp(v - m);
    total += v;
  }
  const float inv = static_cast<float>(1.0 / total);
  for (float& v : out.data()) v *= inv;
  return out;
}

Tensor softmax_backward(const Tensor& output, const Tensor& grad_output) {
  require_same_shape(output, grad_output, "softmax_backward");
  const double inner = dot(output, grad_output);
  Tensor grad(output.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = static_cast<float>(output[i] * (grad_output[i] - inner));
  }
  return grad;
}

Tensor dropout_forward(const Tensor& input, float rate, std::uint64_t seed,
                       Mode mode) {
  check_dropout_rate(rate);
  if (mode == Mode::kEval || rate == 0.0f) return input;
  Tensor out = input;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= dropout_keep_scale(rate, seed, i);
  }
  return out;
}

Tensor dropout_backward(const Tensor& grad_output, float rate,
                        std::uint64_t seed, Mode mode) {
  return dropout_forward(grad_output, rate, seed, mode);
}

}  // namespace styleaug

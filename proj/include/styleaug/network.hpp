#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "styleaug/layers.hpp"
#include "styleaug/tensor.hpp"
#include "styleaug/weights.hpp"

namespace styleaug {

struct LayerSpec {
  std::string tag;
  LayerKind kind;
  bool operator==(const LayerSpec&) const = default;
};

/// Per-channel `(x - mean) / scale`, applied before the first layer.
struct Preprocess {
  std::vector<float> mean;
  std::vector<float> scale;
  bool operator==(const Preprocess&) const = default;
};

/// Sequential CNN description.
struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::size_t input_channels = 3;
  Preprocess preprocess;

  /// Unique non-empty tags, valid layer parameters, matching preprocess
  /// vector lengths. Throws ConfigError.
  void validate() const;

  /// Index of `tag`, or UnknownTag.
  std::size_t index_of(std::string_view tag) const;
  bool has_tag(std::string_view tag) const;

  /// Output shape of every layer for a [input_channels, height, width] input.
  /// Throws ShapeMismatch if the chain breaks.
  std::vector<Shape> shape_chain(std::size_t height, std::size_t width) const;

  /// Miniature VGG: conv3x3(16) relu, conv3x3(16) relu, maxpool2,
  /// conv3x3(32) relu, conv3x3(32) relu, maxpool2. Convolutions are tagged
  /// conv1..conv4, their activations c1..c4, pools pool1/pool2.
  static NetworkSpec desk_default();

  bool operator==(const NetworkSpec&) const = default;
};

/// Feature extractor followed by global average pooling, dropout, a dense
/// layer and softmax. Tags: "gap", "flatten", "dropout", "fc", "prob".
NetworkSpec classifier_spec(const NetworkSpec& extractor,
                            std::size_t num_classes, std::size_t image_size,
                            float dropout_rate);

/// Tag -> activation reshaped to [N_l, M_l] (filters x spatial positions).
/// Rank-1 activations become [N, 1].
using ActivationSet = std::map<std::string, Tensor>;

struct LayerParams {
  Tensor weights;
  Tensor bias;
};

/// Values recorded by a forward pass: `values[0]` is the preprocessed image,
/// `values[i + 1]` the output of layer i.
struct Tape {
  std::vector<Tensor> values;
  Mode mode = Mode::kEval;
  std::uint64_t dropout_seed = 0;
};

/// Per layer index; empty for parameter-free layers.
using ParamGrads = std::vector<std::optional<LayerParams>>;

struct BackwardResult {
  Tensor input;  // gradient w.r.t. the raw (pre-preprocessing) image
  ParamGrads params;
};

/// A NetworkSpec bound to concrete parameters. Copyable value type; const
/// member functions are reentrant.
class Network {
 public:
  /// Validates the spec against the store: every conv/dense tag needs
  /// "<tag>.weight"/"<tag>.bias" entries with chain-compatible shapes.
  /// Preprocessing comes from the store metadata when present, otherwise
  /// from the spec.
  static Network bind(NetworkSpec spec, const WeightStore& store);

  /// He-style (std = sqrt(2 / fan_in)) Gaussian weights, zero biases. The
  /// image size fixes the fan-in of dense layers.
  static WeightStore random_weights(const NetworkSpec& spec,
                                    std::uint64_t seed,
                                    std::size_t image_size = 16);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const Preprocess& preprocess() const noexcept { return preprocess_; }

  std::vector<LayerParams>& params() noexcept { return params_; }
  const std::vector<LayerParams>& params() const noexcept { return params_; }

  /// Exports parameters and preprocessing; `extra_metadata` keys are merged
  /// into the metadata object.
  WeightStore to_weight_store(const std::string& extra_metadata = "{}") const;

  Tensor apply_preprocess(const Tensor& image) const;

  /// Runs layers [0, stop_after] inclusive (default: all).
  Tape forward(const Tensor& image, Mode mode = Mode::kEval,
               std::uint64_t dropout_seed = 0,
               std::optional<std::size_t> stop_after = std::nullopt) const;

  /// Backward pass from gradients injected at layer outputs (keyed by layer
  /// index, shaped like that layer's output). Parameter gradients are
  /// computed only when `want_params` is set.
  BackwardResult backward(const Tape& tape,
                          const std::map<std::size_t, Tensor>& injections,
                          bool want_params) const;

  /// Activations at `tags` in [N_l, M_l] layout, captured in eval mode.
  ActivationSet forward_record(const Tensor& image,
                               const std::set<std::string>& tags) const;

  /// d(sum_tag <grad_tag, F^tag>)/d(image), with gradients given in the
  /// [N_l, M_l] layout of forward_record.
  Tensor backward_to_input(
      const Tensor& image,
      const std::map<std::string, Tensor>& per_tag_gradients) const;

 private:
  Network() = default;

  NetworkSpec spec_;
  Preprocess preprocess_;
  std::vector<LayerParams> params_;
};

/// [C, H, W] -> [C, H*W]; [F] -> [F, 1].
Tensor to_feature_matrix(const Tensor& activation);

}  // namespace styleaug

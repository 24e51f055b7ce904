#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "styleaug/losses.hpp"
#include "styleaug/network.hpp"

namespace styleaug {

enum class OptimizerKind { kGradientDescent, kAdaptiveMoment };
enum class InitKind { kWhiteNoise, kContentCopy };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdaptiveMoment;
  double step_size = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TransferConfig {
  LossWeights weights;  // empty layer_weights means uniform over style_tags
  std::vector<std::string> style_tags{"c1", "c3"};
  std::string content_tag = "c4";
  std::size_t iterations = 7;
  std::size_t steps_per_iteration = 50;
  std::set<std::size_t> snapshot_iterations;
  OptimizerConfig optimizer;
  InitKind init = InitKind::kWhiteNoise;
  std::uint64_t seed = 0;
  float clamp_min = 0.0f;
  float clamp_max = 1.0f;
  /// Seeds the random feature extractor when no weight file is given.
  std::uint64_t network_seed = 7;

  /// Throws ConfigError on violated invariants.
  void validate() const;
  /// Layer weights to use: explicit ones, or uniform over style_tags.
  std::map<std::string, double> effective_layer_weights() const;
};

/// Targets for one synthesis run.
struct TransferTargets {
  ContentTarget content;
  StyleTarget style;
  Tensor content_image;  // used for content-copy initialization
};

struct LossRecord {
  double content = 0.0;
  double style = 0.0;
  double tv = 0.0;
  double total = 0.0;
};

struct TransferResult {
  Tensor image;
  std::map<std::size_t, Tensor> snapshots;
  std::vector<LossRecord> trace;  // one record per optimizer step
};

/// Content features of `content_image` at the content tag and Gram matrices of
/// `reference_image` at every style tag. Both images must share a shape.
TransferTargets prepare_targets(const Network& net, const Tensor& content_image,
                                const Tensor& reference_image,
                                const TransferConfig& config);

/// Gradient-based pixel optimization of total_loss. Each step records the loss,
/// applies the optimizer update and clamps pixels. Throws StepSizeError when
/// the loss becomes non-finite or the last step is not below the first (a
/// zero initial loss is accepted as already optimal).
TransferResult synthesize(const Network& net, const TransferTargets& targets,
                          const TransferConfig& config);

/// synthesize without the final progress check.
TransferResult optimize_image(const Network& net, const TransferTargets& targets,
                              const TransferConfig& config);

/// Throws StepSizeError unless the loss after `steps` optimizer steps is below
/// the initial loss (or the initial loss is zero).
void check_progress(const TransferResult& result, std::size_t steps);

struct BatchItem {
  std::uint64_t seed = 0;
  std::optional<TransferResult> result;
  std::string error;  // set when result is empty
  bool numeric_failure = false;
};

/// Runs synthesize for each content image with seed derive_seed(config.seed,
/// i). Failures are reported per item. Output is independent of `threads`.
std::vector<BatchItem> batch_synthesize(const Network& net,
                                        const std::vector<Tensor>& content_images,
                                        const Tensor& reference_image,
                                        const TransferConfig& config,
                                        std::size_t threads = 0);

}  // namespace styleaug

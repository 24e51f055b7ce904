#include "styleaug/transfer.hpp"

#include <algorithm>
#include <cmath>

#include "styleaug/errors.hpp"
#include "styleaug/parallel.hpp"
#include "styleaug/rng.hpp"

namespace styleaug {

void TransferConfig::validate() const {
  weights.validate();
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (steps_per_iteration < 1) {
    throw ConfigError("steps_per_iteration must be >= 1");
  }
  for (std::size_t s : snapshot_iterations) {
    if (s < 1 || s > iterations) {
      throw ConfigError("snapshot iteration " + std::to_string(s) +
                        " outside [1, " + std::to_string(iterations) + "]");
    }
  }
  if (!(optimizer.step_size > 0.0)) throw ConfigError("step size must be > 0");
  if (optimizer.kind == OptimizerKind::kAdaptiveMoment &&
      (optimizer.beta1 < 0 || optimizer.beta1 >= 1 || optimizer.beta2 < 0 ||
       optimizer.beta2 >= 1 || optimizer.epsilon <= 0)) {
    throw ConfigError("adaptive-moment betas must lie in [0, 1), epsilon > 0");
  }
  if (style_tags.empty() && content_tag.empty()) {
    throw ConfigError("no style or content tags selected");
  }
  if (!(clamp_min < clamp_max)) throw ConfigError("clamp range is empty");
  for (const auto& [tag, w] : weights.layer_weights) {
    if (std::find(style_tags.begin(), style_tags.end(), tag) ==
        style_tags.end()) {
      throw ConfigError("layer weight given for non-style tag '" + tag + "'");
    }
  }
}

std::map<std::string, double> TransferConfig::effective_layer_weights() const {
  return weights.layer_weights.empty() ? LossWeights::uniform(style_tags)
                                       : weights.layer_weights;
}

TransferTargets prepare_targets(const Network& net, const Tensor& content_image,
                                const Tensor& reference_image,
                                const TransferConfig& config) {
  require_rank(content_image, 3, "content image");
  require_same_shape(content_image, reference_image,
                     "content vs reference image");
  TransferTargets targets;
  targets.content_image = content_image;
  targets.content.tag = config.content_tag;
  targets.content.features =
      net.forward_record(content_image, {config.content_tag})
          .at(config.content_tag);

  const std::set<std::string> style_tags(config.style_tags.begin(),
                                         config.style_tags.end());
  const ActivationSet ref = net.forward_record(reference_image, style_tags);
  for (const auto& [tag, features] : ref) {
    targets.style.layers[tag] = {gram(features), features.dim(0),
                                 features.dim(1)};
  }
  return targets;
}

namespace {

Tensor initial_image(const TransferTargets& targets,
                     const TransferConfig& config) {
  if (config.init == InitKind::kContentCopy) {
    Tensor img = targets.content_image;
    for (float& v : img.data()) v = std::clamp(v, config.clamp_min, config.clamp_max);
    return img;
  }
  Tensor img(targets.content_image.shape());
  Rng rng(config.seed);
  for (float& v : img.data()) v = rng.uniform(config.clamp_min, config.clamp_max);
  return img;
}

class PixelOptimizer {
 public:
  PixelOptimizer(const OptimizerConfig& cfg, std::size_t n)
      : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(Tensor& image, const Tensor& grad) {
    ++t_;
    if (cfg_.kind == OptimizerKind::kGradientDescent) {
      for (std::size_t i = 0; i < image.size(); ++i) {
        image[i] -= static_cast<float>(cfg_.step_size * grad[i]);
      }
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < image.size(); ++i) {
      const double g = grad[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      const double update =
          cfg_.step_size * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
      image[i] -= static_cast<float>(update);
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace

TransferResult optimize_image(const Network& net, const TransferTargets& targets,
                              const TransferConfig& config) {
  config.validate();
  LossWeights weights = config.weights;
  weights.layer_weights = config.effective_layer_weights();

  TransferResult result;
  result.image = initial_image(targets, config);
  result.trace.reserve(config.iterations * config.steps_per_iteration);
  PixelOptimizer optimizer(config.optimizer, result.image.size());

  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    for (std::size_t s = 0; s < config.steps_per_iteration; ++s) {
      TotalLoss loss = total_loss(result.image, net, targets.content,
                                  targets.style, weights);
      if (!std::isfinite(loss.total) || !all_finite(loss.grad)) {
        throw StepSizeError("loss became non-finite at step " +
                            std::to_string(result.trace.size()) +
                            "; reduce the step size");
      }
      result.trace.push_back({loss.content, loss.style, loss.tv, loss.total});
      optimizer.step(result.image, loss.grad);
      for (float& v : result.image.data()) {
        v = std::clamp(v, config.clamp_min, config.clamp_max);
      }
    }
    if (config.snapshot_iterations.contains(iter)) {
      result.snapshots.emplace(iter, result.image);
    }
  }

  return result;
}

void check_progress(const TransferResult& result, std::size_t steps) {
  if (steps == 0 || steps > result.trace.size()) {
    throw ConfigError("check_progress: step count outside the loss trace");
  }
  const double first = result.trace.front().total;
  const double last = result.trace[steps - 1].total;
  if (first > 0.0 && !(last < first)) {
    throw StepSizeError("total loss did not decrease (" + std::to_string(first) +
                        " -> " + std::to_string(last) +
                        "); the step size is likely divergent");
  }
}

TransferResult synthesize(const Network& net, const TransferTargets& targets,
                          const TransferConfig& config) {
  TransferResult result = optimize_image(net, targets, config);
  check_progress(result, result.trace.size());
  return result;
}

std::vector<BatchItem> batch_synthesize(const Network& net,
                                        const std::vector<Tensor>& content_images,
                                        const Tensor& reference_image,
                                        const TransferConfig& config,
                                        std::size_t threads) {
  if (content_images.empty()) throw ConfigError("batch_synthesize: empty batch");
  config.validate();
  std::vector<BatchItem> items(content_images.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].seed = derive_seed(config.seed, i);
  }

  auto run_one = [&](std::size_t i) {
    TransferConfig cfg = config;
    cfg.seed = items[i].seed;
    try {
      const TransferTargets targets =
          prepare_targets(net, content_images[i], reference_image, cfg);
      items[i].result = synthesize(net, targets, cfg);
    } catch (const Error& e) {
      items[i].error = e.what();
      items[i].numeric_failure = e.kind() == ErrorKind::kNumeric;
    }
  };

  parallel_for(items.size(), threads, run_one);
  return items;
}

}  // namespace styleaug

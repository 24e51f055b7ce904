#include "styleaug/losses.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <set>

#include "styleaug/errors.hpp"

namespace styleaug {

namespace {

using RowMatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrixD as_double(const Tensor& t) {
  return Eigen::Map<const RowMatrixF>(t.data().data(), t.dim(0), t.dim(1))
      .cast<double>();
}

Tensor from_double(const RowMatrixD& m) {
  Tensor out({static_cast<std::size_t>(m.rows()),
              static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMatrixF>(out.data().data(), m.rows(), m.cols()) =
      m.cast<float>();
  return out;
}

void require_features(const Tensor& f, const char* context) {
  require_rank(f, 2, context);
}

}  // namespace

void LossWeights::validate() const {
  if (content_weight < 0 || style_weight < 0 || tv_weight < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (layer_weights.empty()) return;
  double total = 0.0;
  for (const auto& [tag, w] : layer_weights) {
    if (w < 0) throw ConfigError("layer weight for '" + tag + "' is negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ConfigError("layer weights sum to " + std::to_string(total) +
                      ", expected 1");
  }
}

std::map<std::string, double> LossWeights::uniform(
    const std::vector<std::string>& tags) {
  std::map<std::string, double> out;
  for (const auto& t : tags) out[t] = 1.0 / static_cast<double>(tags.size());
  return out;
}

Tensor gram(const Tensor& features) {
  require_features(features, "gram");
  const RowMatrixD f = as_double(features);
  return from_double(f * f.transpose());
}

LossGrad content_loss(const Tensor& features, const Tensor& target) {
  require_same_shape(features, target, "content_loss");
  LossGrad out;
  out.grad = Tensor(features.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double d = static_cast<double>(features[i]) - target[i];
    s += d * d;
    out.grad[i] = static_cast<float>(d);
  }
  out.value = 0.5 * s;
  return out;
}

LossGrad style_energy(const Tensor& features, const Tensor& target_gram) {
  require_features(features, "style_energy");
  const std::size_t n = features.dim(0);
  const std::size_t m = features.dim(1);
  if (target_gram.shape() != Shape{n, n}) {
    throw ShapeMismatch("style_energy: target gram " +
                        shape_to_string(target_gram.shape()) + " for " +
                        std::to_string(n) + " filters");
  }
  const RowMatrixD f = as_double(features);
  const RowMatrixD diff = f * f.transpose() - as_double(target_gram);
  const double nm2 = static_cast<double>(n) * n * static_cast<double>(m) * m;
  LossGrad out;
  out.value = diff.squaredNorm() / (4.0 * nm2);
  out.grad = from_double((diff + diff.transpose()) * f / (2.0 * nm2));
  return out;
}

StyleLossResult style_loss(const ActivationSet& activations,
                           const StyleTarget& targets,
                           const std::map<std::string, double>& layer_weights) {
  StyleLossResult out;
  for (const auto& [tag, target] : targets.layers) {
    auto act = activations.find(tag);
    if (act == activations.end()) {
      throw UnknownTag("style_loss: no activation recorded for tag '" + tag +
                       "'");
    }
    auto w = layer_weights.find(tag);
    if (w == layer_weights.end()) {
      throw UnknownTag("style_loss: no layer weight for tag '" + tag + "'");
    }
    LossGrad e = style_energy(act->second, target.gram);
    out.value += w->second * e.value;
    e.grad *= static_cast<float>(w->second);
    out.grads.emplace(tag, std::move(e.grad));
  }
  return out;
}

LossGrad tv_loss(const Tensor& image) {
  require_rank(image, 3, "tv_loss");
  const std::size_t c_n = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h * w < 2) {
    throw ShapeMismatch("tv_loss: image " + shape_to_string(image.shape()) +
                        " has no neighbouring pixels");
  }
  LossGrad out;
  out.grad = Tensor(image.shape());
  double s = 0.0;
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double v = image.at(c, y, x);
        if (y + 1 < h) {
          const double d = image.at(c, y + 1, x) - v;
          s += d * d;
          out.grad.at(c, y + 1, x) += static_cast<float>(2.0 * d);
          out.grad.at(c, y, x) -= static_cast<float>(2.0 * d);
        }
        if (x + 1 < w) {
          const double d = image.at(c, y, x + 1) - v;
          s += d * d;
          out.grad.at(c, y, x + 1) += static_cast<float>(2.0 * d);
          out.grad.at(c, y, x) -= static_cast<float>(2.0 * d);
        }
      }
    }
  }
  out.value = s;
  return out;
}

TotalLoss total_loss(const Tensor& image, const Network& net,
                     const ContentTarget& content, const StyleTarget& style,
                     const LossWeights& weights) {
  TotalLoss out;
  out.grad = Tensor(image.shape());

  std::set<std::string> tags;
  const bool use_content = weights.content_weight != 0.0;
  const bool use_style = weights.style_weight != 0.0 && !style.layers.empty();
  if (use_content) tags.insert(content.tag);
  if (use_style) {
    for (const auto& [tag, target] : style.layers) tags.insert(tag);
  }

  if (!tags.empty()) {
    std::size_t deepest = 0;
    for (const auto& tag : tags) {
      deepest = std::max(deepest, net.spec().index_of(tag));
    }
    const Tape tape = net.forward(image, Mode::kEval, 0, deepest);
    ActivationSet acts;
    for (const auto& tag : tags) {
      acts.emplace(tag,
                   to_feature_matrix(tape.values[net.spec().index_of(tag) + 1]));
    }

    std::map<std::size_t, Tensor> injected;
    auto inject = [&](const std::string& tag, Tensor g, float scale) {
      const std::size_t idx = net.spec().index_of(tag);
      g *= scale;
      g = std::move(g).reshaped(tape.values[idx + 1].shape());
      auto [it, inserted] = injected.emplace(idx, g);
      if (!inserted) it->second += g;
    };
    if (use_content) {
      LossGrad c = content_loss(acts.at(content.tag), content.features);
      out.content = c.value;
      inject(content.tag, std::move(c.grad),
             static_cast<float>(weights.content_weight));
    }
    if (use_style) {
      std::map<std::string, double> layer_weights = weights.layer_weights;
      if (layer_weights.empty()) {
        std::vector<std::string> style_tags;
        for (const auto& [tag, target] : style.layers) style_tags.push_back(tag);
        layer_weights = LossWeights::uniform(style_tags);
      }
      StyleLossResult s = style_loss(acts, style, layer_weights);
      out.style = s.value;
      for (auto& [tag, g] : s.grads) {
        inject(tag, std::move(g), static_cast<float>(weights.style_weight));
      }
    }
    out.grad = net.backward(tape, injected, false).input;
  }

  if (weights.tv_weight != 0.0) {
    LossGrad tv = tv_loss(image);
    out.tv = tv.value;
    tv.grad *= static_cast<float>(weights.tv_weight);
    out.grad += tv.grad;
  }
  out.total = weights.content_weight * out.content +
              weights.style_weight * out.style + weights.tv_weight * out.tv;
  return out;
}

}  // namespace styleaug

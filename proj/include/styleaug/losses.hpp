#pragma once

#include <map>
#include <string>

#include "styleaug/network.hpp"
#include "styleaug/tensor.hpp"

namespace styleaug {

/// Value of a scalar loss together with its gradient.
struct LossGrad {
  double value = 0.0;
  Tensor grad;
};

struct StyleLayerTarget {
  Tensor gram;  // A^l, [N_l, N_l]
  std::size_t filters = 0;    // N_l
  std::size_t positions = 0;  // M_l
};

/// Gram matrices of the reference image, keyed by style tag.
struct StyleTarget {
  std::map<std::string, StyleLayerTarget> layers;
};

/// Feature maps of the content image at one tag, [N_l, M_l].
struct ContentTarget {
  std::string tag;
  Tensor features;
};

struct LossWeights {
  double content_weight = 0.0003;  // alpha
  double style_weight = 1.0;       // beta
  double tv_weight = 0.00001;
  /// Style tag -> w_l. Non-negative and summing to one.
  std::map<std::string, double> layer_weights;

  /// Throws ConfigError when any weight is negative or the layer weights do
  /// not sum to 1 within 1e-6.
  void validate() const;

  /// 1/L for each of the given tags.
  static std::map<std::string, double> uniform(
      const std::vector<std::string>& tags);
};

/// G = F F^T for F of shape [N, M].
Tensor gram(const Tensor& features);

/// 1/2 sum (F - P)^2, gradient F - P.
LossGrad content_loss(const Tensor& features, const Tensor& target);

/// 1/(4 N^2 M^2) sum (G - A)^2 with G = gram(F). The gradient is
/// 1/(2 N^2 M^2) ((G - A) + (G - A)^T) F, i.e. (G - A) F / (N^2 M^2) for a
/// symmetric A.
LossGrad style_energy(const Tensor& features, const Tensor& target_gram);

struct StyleLossResult {
  double value = 0.0;
  std::map<std::string, Tensor> grads;  // per style tag
};

/// sum_l w_l E_l over the tags of `targets`.
StyleLossResult style_loss(const ActivationSet& activations,
                           const StyleTarget& targets,
                           const std::map<std::string, double>& layer_weights);

/// Squared differences between vertical and horizontal neighbours, summed
/// over channels. Needs H, W >= 2.
LossGrad tv_loss(const Tensor& image);

struct TotalLoss {
  double content = 0.0;  // unweighted
  double style = 0.0;    // unweighted (already layer-weighted)
  double tv = 0.0;       // unweighted
  double total = 0.0;    // alpha*content + beta*style + tv_weight*tv
  Tensor grad;           // d total / d image
};

TotalLoss total_loss(const Tensor& image, const Network& net,
                     const ContentTarget& content, const StyleTarget& style,
                     const LossWeights& weights);

}  // namespace styleaug

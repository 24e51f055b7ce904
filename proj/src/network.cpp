#include "styleaug/network.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "styleaug/errors.hpp"
#include "styleaug/rng.hpp"

namespace styleaug {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

bool has_params(const LayerKind& kind) {
  return std::holds_alternative<Conv>(kind) ||
         std::holds_alternative<Dense>(kind);
}

const Tensor& require_entry(const WeightStore& store, const std::string& name) {
  const Tensor* t = store.find(name);
  if (!t) throw ShapeMismatch("weight store has no entry '" + name + "'");
  return *t;
}

}  // namespace

// ---------------------------------------------------------------------------
// NetworkSpec
// ---------------------------------------------------------------------------

void NetworkSpec::validate() const {
  if (input_channels == 0) throw ConfigError("input_channels must be positive");
  std::set<std::string> seen;
  for (const LayerSpec& layer : layers) {
    if (layer.tag.empty()) throw ConfigError("layer tags must be non-empty");
    if (!seen.insert(layer.tag).second) {
      throw ConfigError("duplicate layer tag '" + layer.tag + "'");
    }
    validate_layer(layer.kind);
  }
  if (preprocess.mean.size() != preprocess.scale.size() ||
      (!preprocess.mean.empty() && preprocess.mean.size() != input_channels)) {
    throw ConfigError("preprocess mean/scale must have one entry per channel");
  }
  for (float s : preprocess.scale) {
    if (s == 0.0f) throw ConfigError("preprocess scale must be non-zero");
  }
}

std::size_t NetworkSpec::index_of(std::string_view tag) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].tag == tag) return i;
  }
  throw UnknownTag("unknown layer tag '" + std::string(tag) + "'");
}

bool NetworkSpec::has_tag(std::string_view tag) const {
  for (const LayerSpec& l : layers) {
    if (l.tag == tag) return true;
  }
  return false;
}

std::vector<Shape> NetworkSpec::shape_chain(std::size_t height,
                                            std::size_t width) const {
  std::vector<Shape> chain;
  Shape current{input_channels, height, width};
  for (const LayerSpec& layer : layers) {
    current = layer_output_shape(layer.kind, current);
    chain.push_back(current);
  }
  return chain;
}

NetworkSpec NetworkSpec::desk_default() {
  NetworkSpec spec;
  spec.input_channels = 3;
  spec.preprocess = {{0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f}};
  spec.layers = {
      {"conv1", Conv{16, 3, 3, 1, 1}}, {"c1", ReLU{}},
      {"conv2", Conv{16, 3, 3, 1, 1}}, {"c2", ReLU{}},
      {"pool1", MaxPool{2, 2}},        {"conv3", Conv{32, 3, 3, 1, 1}},
      {"c3", ReLU{}},                  {"conv4", Conv{32, 3, 3, 1, 1}},
      {"c4", ReLU{}},                  {"pool2", MaxPool{2, 2}},
  };
  return spec;
}

NetworkSpec classifier_spec(const NetworkSpec& extractor,
                            std::size_t num_classes, std::size_t image_size,
                            float dropout_rate) {
  NetworkSpec spec = extractor;
  const auto chain = extractor.shape_chain(image_size, image_size);
  const Shape& features = chain.empty()
                              ? Shape{extractor.input_channels, image_size,
                                      image_size}
                              : chain.back();
  if (features.size() != 3 || features[1] != features[2]) {
    throw ConfigError("classifier head needs a square rank-3 feature map, got " +
                      shape_to_string(features));
  }
  spec.layers.push_back({"gap", AvgPool{features[1], features[1]}});
  spec.layers.push_back({"flatten", Flatten{}});
  spec.layers.push_back({"dropout", Dropout{dropout_rate}});
  spec.layers.push_back({"fc", Dense{num_classes}});
  spec.layers.push_back({"prob", Softmax{}});
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network Network::bind(NetworkSpec spec, const WeightStore& store) {
  spec.validate();
  Network net;
  net.preprocess_ = spec.preprocess;
  if (!store.means().empty()) {
    if (store.means().size() != spec.input_channels) {
      throw ShapeMismatch("weight metadata has " +
                          std::to_string(store.means().size()) +
                          " preprocessing channels, network expects " +
                          std::to_string(spec.input_channels));
    }
    net.preprocess_ = {store.means(), store.scales()};
  }

  // Channel count (rank 3) or feature count (rank 1, 0 = unknown) flowing
  // through the chain; spatial extents are checked when images arrive.
  bool spatial = true;
  std::size_t width = spec.input_channels;
  net.params_.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (has_params(layer.kind)) {
      const Tensor& w = require_entry(store, WeightStore::weight_name(layer.tag));
      const Tensor& b = require_entry(store, WeightStore::bias_name(layer.tag));
      net.params_[i] = {w, b};
    }
    std::visit(
        Overloaded{
            [&](const Conv& c) {
              const Tensor& w = net.params_[i].weights;
              const Shape expected{c.out_channels, width, c.kernel_h,
                                   c.kernel_w};
              if (!spatial || w.shape() != expected) {
                throw ShapeMismatch("layer '" + layer.tag + "': weights " +
                                    shape_to_string(w.shape()) + ", expected " +
                                    shape_to_string(expected));
              }
              if (net.params_[i].bias.shape() != Shape{c.out_channels}) {
                throw ShapeMismatch("layer '" + layer.tag + "': bias shape " +
                                    shape_to_string(net.params_[i].bias.shape()));
              }
              width = c.out_channels;
            },
            [&](const Flatten&) {
              spatial = false;
              width = 0;
            },
            [&](const Dense& d) {
              const Tensor& w = net.params_[i].weights;
              if (spatial || w.rank() != 2 || w.dim(0) != d.out_features ||
                  (width != 0 && w.dim(1) != width)) {
                throw ShapeMismatch("layer '" + layer.tag + "': weights " +
                                    shape_to_string(w.shape()) +
                                    " do not fit the chain");
              }
              if (net.params_[i].bias.shape() != Shape{d.out_features}) {
                throw ShapeMismatch("layer '" + layer.tag + "': bias shape " +
                                    shape_to_string(net.params_[i].bias.shape()));
              }
              width = d.out_features;
            },
            [](const auto&) {},
        },
        layer.kind);
  }
  net.spec_ = std::move(spec);
  return net;
}

WeightStore Network::random_weights(const NetworkSpec& spec, std::uint64_t seed,
                                    std::size_t image_size) {
  spec.validate();
  const auto chain = spec.shape_chain(image_size, image_size);
  WeightStore store;
  Rng rng(seed);
  Shape in{spec.input_channels, image_size, image_size};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    Shape wshape;
    std::size_t out = 0;
    if (const auto* c = std::get_if<Conv>(&layer.kind)) {
      wshape = {c->out_channels, in[0], c->kernel_h, c->kernel_w};
      out = c->out_channels;
    } else if (const auto* d = std::get_if<Dense>(&layer.kind)) {
      wshape = {d->out_features, in[0]};
      out = d->out_features;
    }
    if (!wshape.empty()) {
      Tensor w(wshape);
      const double fan_in = static_cast<double>(shape_size(wshape) / out);
      const double stddev = std::sqrt(2.0 / fan_in);
      for (float& v : w.data()) v = static_cast<float>(stddev * rng.normal());
      store.put(WeightStore::weight_name(layer.tag), std::move(w));
      store.put(WeightStore::bias_name(layer.tag), Tensor({out}));
    }
    in = chain[i];
  }
  store.set_preprocess(spec.preprocess.mean, spec.preprocess.scale);
  return store;
}

WeightStore Network::to_weight_store(const std::string& extra_metadata) const {
  WeightStore store;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (!has_params(spec_.layers[i].kind)) continue;
    store.put(WeightStore::weight_name(spec_.layers[i].tag), params_[i].weights);
    store.put(WeightStore::bias_name(spec_.layers[i].tag), params_[i].bias);
  }
  nlohmann::json meta = nlohmann::json::parse(extra_metadata);
  meta["means"] = preprocess_.mean;
  meta["scales"] = preprocess_.scale;
  store.set_metadata_json(meta.dump());
  return store;
}

Tensor Network::apply_preprocess(const Tensor& image) const {
  require_rank(image, 3, "network input");
  if (image.dim(0) != spec_.input_channels) {
    throw ShapeMismatch("network expects " +
                        std::to_string(spec_.input_channels) +
                        " input channels, image has " +
                        std::to_string(image.dim(0)));
  }
  Tensor out = image;
  if (preprocess_.mean.empty()) return out;
  const std::size_t plane = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < image.dim(0); ++c) {
    const float mean = preprocess_.mean[c];
    const float inv = 1.0f / preprocess_.scale[c];
    float* p = out.data().data() + c * plane;
    for (std::size_t k = 0; k < plane; ++k) p[k] = (p[k] - mean) * inv;
  }
  return out;
}

Tape Network::forward(const Tensor& image, Mode mode,
                      std::uint64_t dropout_seed,
                      std::optional<std::size_t> stop_after) const {
  const std::size_t end =
      stop_after ? std::min(*stop_after + 1, spec_.layers.size())
                 : spec_.layers.size();
  Tape tape;
  tape.mode = mode;
  tape.dropout_seed = dropout_seed;
  tape.values.reserve(end + 1);
  tape.values.push_back(apply_preprocess(image));
  for (std::size_t i = 0; i < end; ++i) {
    const Tensor& x = tape.values.back();
    const LayerParams& p = params_[i];
    Tensor y = std::visit(
        Overloaded{
            [&](const Conv& c) {
              return conv2d_forward(x, p.weights, p.bias, c.stride, c.padding);
            },
            [&](const ReLU&) { return relu_forward(x); },
            [&](const MaxPool& m) { return maxpool_forward(x, m.k, m.stride); },
            [&](const AvgPool& a) { return avgpool_forward(x, a.k, a.stride); },
            [&](const Flatten&) { return x.reshaped({x.size()}); },
            [&](const Dense&) { return dense_forward(x, p.weights, p.bias); },
            [&](const Dropout& d) {
              return dropout_forward(x, d.rate, derive_seed(dropout_seed, i),
                                     mode);
            },
            [&](const Softmax&) { return softmax_forward(x); },
        },
        spec_.layers[i].kind);
    tape.values.push_back(std::move(y));
  }
  return tape;
}

BackwardResult Network::backward(const Tape& tape,
                                 const std::map<std::size_t, Tensor>& injections,
                                 bool want_params) const {
  BackwardResult result;
  result.params.resize(spec_.layers.size());
  if (tape.values.empty()) throw ShapeMismatch("backward: empty tape");
  Tensor grad(tape.values[0].shape());
  if (injections.empty()) {
    result.input = std::move(grad);
    return result;
  }
  const std::size_t top = injections.rbegin()->first;
  if (top + 1 >= tape.values.size()) {
    throw ShapeMismatch("backward: injection at layer " + std::to_string(top) +
                        " beyond the recorded forward pass");
  }
  grad = Tensor(tape.values[top + 1].shape());
  for (std::size_t step = top + 1; step-- > 0;) {
    if (auto it = injections.find(step); it != injections.end()) {
      if (it->second.shape() != grad.shape()) {
        throw ShapeMismatch("gradient for layer '" + spec_.layers[step].tag +
                            "' has shape " +
                            shape_to_string(it->second.shape()) +
                            ", activation is " + shape_to_string(grad.shape()));
      }
      grad += it->second;
    }
    const Tensor& x = tape.values[step];
    const Tensor& y = tape.values[step + 1];
    const LayerParams& p = params_[step];
    grad = std::visit(
        Overloaded{
            [&](const Conv& c) {
              if (!want_params) {
                return conv2d_backward_input(x, p.weights, grad, c.stride,
                                             c.padding);
              }
              ConvGrads g =
                  conv2d_backward(x, p.weights, grad, c.stride, c.padding);
              result.params[step] =
                  LayerParams{std::move(g.weights), std::move(g.bias)};
              return std::move(g.input);
            },
            [&](const ReLU&) { return relu_backward(x, grad); },
            [&](const MaxPool& m) {
              return maxpool_backward(x, grad, m.k, m.stride);
            },
            [&](const AvgPool& a) {
              return avgpool_backward(x, grad, a.k, a.stride);
            },
            [&](const Flatten&) { return std::move(grad).reshaped(x.shape()); },
            [&](const Dense&) {
              DenseGrads g = dense_backward(x, p.weights, grad);
              if (want_params) {
                result.params[step] =
                    LayerParams{std::move(g.weights), std::move(g.bias)};
              }
              return std::move(g.input);
            },
            [&](const Dropout& d) {
              return dropout_backward(grad, d.rate,
                                      derive_seed(tape.dropout_seed, step),
                                      tape.mode);
            },
            [&](const Softmax&) { return softmax_backward(y, grad); },
        },
        spec_.layers[step].kind);
  }
  // Chain through (x - mean) / scale.
  if (!preprocess_.mean.empty()) {
    const std::size_t plane = grad.dim(1) * grad.dim(2);
    for (std::size_t c = 0; c < grad.dim(0); ++c) {
      const float inv = 1.0f / preprocess_.scale[c];
      float* g = grad.data().data() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) g[k] *= inv;
    }
  }
  result.input = std::move(grad);
  return result;
}

Tensor to_feature_matrix(const Tensor& activation) {
  if (activation.rank() == 3) {
    return activation.reshaped(
        {activation.dim(0), activation.dim(1) * activation.dim(2)});
  }
  if (activation.rank() == 1) return activation.reshaped({activation.dim(0), 1});
  throw ShapeMismatch("cannot view activation " +
                      shape_to_string(activation.shape()) + " as [N, M]");
}

ActivationSet Network::forward_record(const Tensor& image,
                                      const std::set<std::string>& tags) const {
  std::size_t deepest = 0;
  std::vector<std::pair<std::string, std::size_t>> wanted;
  for (const std::string& tag : tags) {
    const std::size_t idx = spec_.index_of(tag);
    wanted.emplace_back(tag, idx);
    deepest = std::max(deepest, idx);
  }
  ActivationSet out;
  if (wanted.empty()) return out;
  const Tape tape = forward(image, Mode::kEval, 0, deepest);
  for (const auto& [tag, idx] : wanted) {
    out.emplace(tag, to_feature_matrix(tape.values[idx + 1]));
  }
  return out;
}

Tensor Network::backward_to_input(
    const Tensor& image,
    const std::map<std::string, Tensor>& per_tag_gradients) const {
  std::map<std::size_t, std::string> by_index;
  for (const auto& [tag, grad] : per_tag_gradients) {
    by_index.emplace(spec_.index_of(tag), tag);
  }
  if (by_index.empty()) return Tensor(apply_preprocess(image).shape());
  const Tape tape = forward(image, Mode::kEval, 0, by_index.rbegin()->first);
  std::map<std::size_t, Tensor> injections;
  for (const auto& [idx, tag] : by_index) {
    const Tensor& activation = tape.values[idx + 1];
    const Tensor& g = per_tag_gradients.at(tag);
    if (g.size() != activation.size() ||
        g.shape() != to_feature_matrix(activation).shape()) {
      throw ShapeMismatch("gradient for tag '" + tag + "' has shape " +
                          shape_to_string(g.shape()) + ", expected " +
                          shape_to_string(to_feature_matrix(activation).shape()));
    }
    injections.emplace(idx, g.reshaped(activation.shape()));
  }
  return backward(tape, injections, false).input;
}

}  // namespace styleaug

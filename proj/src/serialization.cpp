#include "styleaug/serialization.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "styleaug/errors.hpp"

namespace styleaug {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const char* context) {
  if (!j.is_object()) {
    throw ConfigError(std::string(context) + " must be a JSON object");
  }
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kGradientDescent ? "plain-gd" : "adaptive-moment";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "plain-gd") return OptimizerKind::kGradientDescent;
  if (s == "adaptive-moment") return OptimizerKind::kAdaptiveMoment;
  throw ConfigError("unknown optimizer '" + s + "'");
}

std::string init_name(InitKind k) {
  return k == InitKind::kWhiteNoise ? "white-noise" : "content-copy";
}

InitKind parse_init(const std::string& s) {
  if (s == "white-noise") return InitKind::kWhiteNoise;
  if (s == "content-copy") return InitKind::kContentCopy;
  throw ConfigError("unknown init '" + s + "'");
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

json layer_to_json(const LayerSpec& layer) {
  json j{{"tag", layer.tag}, {"kind", layer_name(layer.kind)}};
  std::visit(Overloaded{
                 [&](const Conv& c) {
                   j["out_channels"] = c.out_channels;
                   j["kernel"] = {c.kernel_h, c.kernel_w};
                   j["stride"] = c.stride;
                   j["padding"] = c.padding;
                 },
                 [&](const MaxPool& p) {
                   j["k"] = p.k;
                   j["stride"] = p.stride;
                 },
                 [&](const AvgPool& p) {
                   j["k"] = p.k;
                   j["stride"] = p.stride;
                 },
                 [&](const Dense& d) { j["out_features"] = d.out_features; },
                 [&](const Dropout& d) { j["rate"] = d.rate; },
                 [](const auto&) {},
             },
             layer.kind);
  return j;
}

LayerSpec layer_from_json(const json& j) {
  reject_unknown(j,
                 {"tag", "kind", "out_channels", "kernel", "stride", "padding",
                  "k", "out_features", "rate"},
                 "layer");
  LayerSpec layer;
  std::string kind;
  read(j, "tag", layer.tag);
  read(j, "kind", kind);
  if (kind == "conv") {
    Conv c;
    read(j, "out_channels", c.out_channels);
    std::vector<std::size_t> kernel{c.kernel_h, c.kernel_w};
    read(j, "kernel", kernel);
    if (kernel.size() != 2) throw ConfigError("conv kernel must be [kh, kw]");
    c.kernel_h = kernel[0];
    c.kernel_w = kernel[1];
    read(j, "stride", c.stride);
    read(j, "padding", c.padding);
    layer.kind = c;
  } else if (kind == "relu") {
    layer.kind = ReLU{};
  } else if (kind == "maxpool" || kind == "avgpool") {
    std::size_t k = 2, stride = 2;
    read(j, "k", k);
    read(j, "stride", stride);
    if (kind == "maxpool") {
      layer.kind = MaxPool{k, stride};
    } else {
      layer.kind = AvgPool{k, stride};
    }
  } else if (kind == "flatten") {
    layer.kind = Flatten{};
  } else if (kind == "dense") {
    Dense d;
    read(j, "out_features", d.out_features);
    layer.kind = d;
  } else if (kind == "dropout") {
    Dropout d;
    read(j, "rate", d.rate);
    layer.kind = d;
  } else if (kind == "softmax") {
    layer.kind = Softmax{};
  } else {
    throw ConfigError("unknown layer kind '" + kind + "'");
  }
  return layer;
}

}  // namespace

json transfer_config_to_json(const TransferConfig& c) {
  json layers = json::object();
  for (const auto& [tag, w] : c.weights.layer_weights) layers[tag] = w;
  return json{
      {"weights",
       {{"content", c.weights.content_weight},
        {"style", c.weights.style_weight},
        {"tv", c.weights.tv_weight},
        {"layers", layers}}},
      {"style_tags", c.style_tags},
      {"content_tag", c.content_tag},
      {"iterations", c.iterations},
      {"steps_per_iteration", c.steps_per_iteration},
      {"snapshot_iterations", c.snapshot_iterations},
      {"optimizer",
       {{"kind", optimizer_name(c.optimizer.kind)},
        {"step_size", c.optimizer.step_size},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon}}},
      {"init", init_name(c.init)},
      {"seed", c.seed},
      {"clamp", {c.clamp_min, c.clamp_max}},
      {"network_seed", c.network_seed},
  };
}

TransferConfig transfer_config_from_json(const json& j) {
  reject_unknown(j,
                 {"weights", "style_tags", "content_tag", "iterations",
                  "steps_per_iteration", "snapshot_iterations", "optimizer",
                  "init", "seed", "clamp", "network_seed"},
                 "transfer config");
  TransferConfig c;
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    reject_unknown(w, {"content", "style", "tv", "layers"}, "weights");
    read(w, "content", c.weights.content_weight);
    read(w, "style", c.weights.style_weight);
    read(w, "tv", c.weights.tv_weight);
    read(w, "layers", c.weights.layer_weights);
  }
  read(j, "style_tags", c.style_tags);
  read(j, "content_tag", c.content_tag);
  read(j, "iterations", c.iterations);
  read(j, "steps_per_iteration", c.steps_per_iteration);
  read(j, "snapshot_iterations", c.snapshot_iterations);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, {"kind", "step_size", "beta1", "beta2", "epsilon"},
                   "optimizer");
    std::string kind = optimizer_name(c.optimizer.kind);
    read(o, "kind", kind);
    c.optimizer.kind = parse_optimizer(kind);
    read(o, "step_size", c.optimizer.step_size);
    read(o, "beta1", c.optimizer.beta1);
    read(o, "beta2", c.optimizer.beta2);
    read(o, "epsilon", c.optimizer.epsilon);
  }
  std::string init = init_name(c.init);
  read(j, "init", init);
  c.init = parse_init(init);
  read(j, "seed", c.seed);
  std::vector<float> clamp{c.clamp_min, c.clamp_max};
  read(j, "clamp", clamp);
  if (clamp.size() != 2) throw ConfigError("clamp must be [min, max]");
  c.clamp_min = clamp[0];
  c.clamp_max = clamp[1];
  read(j, "network_seed", c.network_seed);
  c.validate();
  return c;
}

json network_spec_to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  return json{{"input_channels", spec.input_channels},
              {"preprocess",
               {{"mean", spec.preprocess.mean}, {"scale", spec.preprocess.scale}}},
              {"layers", layers}};
}

NetworkSpec network_spec_from_json(const json& j) {
  reject_unknown(j, {"input_channels", "preprocess", "layers"}, "network spec");
  NetworkSpec spec;
  spec.preprocess = {};
  read(j, "input_channels", spec.input_channels);
  if (j.contains("preprocess")) {
    const json& p = j.at("preprocess");
    reject_unknown(p, {"mean", "scale"}, "preprocess");
    read(p, "mean", spec.preprocess.mean);
    read(p, "scale", spec.preprocess.scale);
  }
  if (j.contains("layers")) {
    for (const json& l : j.at("layers")) spec.layers.push_back(layer_from_json(l));
  }
  spec.validate();
  return spec;
}

json train_config_to_json(const TrainConfig& c) {
  std::vector<std::string> ops;
  for (GeometricOp op : c.augment_ops) ops.emplace_back(geometric_op_name(op));
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon},
              {"dropout", c.dropout},
              {"batch_size", c.batch_size},
              {"runs", c.runs},
              {"seed", c.seed},
              {"augment_ops", ops},
              {"validation_fraction", c.validation_fraction},
              {"image_size", c.image_size},
              {"threads", c.threads}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                 {"epochs", "learning_rate", "beta1", "beta2", "epsilon",
                  "dropout", "batch_size", "runs", "seed", "augment_ops",
                  "validation_fraction", "image_size", "threads"},
                 "train config");
  TrainConfig c;
  read(j, "epochs", c.epochs);
  read(j, "learning_rate", c.learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "dropout", c.dropout);
  read(j, "batch_size", c.batch_size);
  read(j, "runs", c.runs);
  read(j, "seed", c.seed);
  if (j.contains("augment_ops")) {
    std::vector<std::string> ops;
    read(j, "augment_ops", ops);
    c.augment_ops.clear();
    for (const auto& op : ops) c.augment_ops.push_back(parse_geometric_op(op));
  }
  read(j, "validation_fraction", c.validation_fraction);
  read(j, "image_size", c.image_size);
  read(j, "threads", c.threads);
  c.validate();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace styleaug

#include "styleaug/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "styleaug/errors.hpp"
#include "styleaug/parallel.hpp"
#include "styleaug/rng.hpp"
#include "styleaug/serialization.hpp"

namespace fs = std::filesystem;

namespace styleaug {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (epochs > 10) throw ConfigError("epochs is capped at 10");
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(dropout >= 0.0f && dropout < 1.0f)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  if (image_size < 4) throw ConfigError("image_size must be >= 4");
}

// ---------------------------------------------------------------------------
// Data loading
// ---------------------------------------------------------------------------

std::vector<LabelledImage> load_manifest_images(const DatasetManifest& manifest,
                                                std::size_t image_size) {
  std::vector<LabelledImage> out;
  out.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    out.push_back({resize_bilinear(load_image(manifest.root / e.path), image_size,
                                   image_size),
                   e.label});
  }
  return out;
}

std::vector<LabelledImage> load_labelled_folder(const fs::path& root,
                                                std::size_t image_size) {
  std::vector<LabelledImage> out;
  for (const auto& [label, files] : list_labelled_images(root)) {
    for (const std::string& rel : files) {
      out.push_back(
          {resize_bilinear(load_image(root / rel), image_size, image_size), label});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

Classifier::Classifier(Network net, std::vector<std::string> classes,
                       std::size_t image_size)
    : net_(std::move(net)),
      classes_(std::move(classes)),
      image_size_(image_size),
      logits_index_(net_.spec().index_of("fc")) {
  const auto* dense = std::get_if<Dense>(&net_.spec().layers[logits_index_].kind);
  if (!dense || dense->out_features != classes_.size()) {
    throw ShapeMismatch("classifier head does not match " +
                        std::to_string(classes_.size()) + " classes");
  }
}

Tensor Classifier::logits(const Tensor& image) const {
  Tape tape = net_.forward(image, Mode::kEval, 0, logits_index_);
  return std::move(tape.values.back());
}

std::size_t Classifier::predict(const Tensor& image) const {
  const Tensor z = logits(image);
  return static_cast<std::size_t>(
      std::max_element(z.data().begin(), z.data().end()) - z.data().begin());
}

const std::string& Classifier::predict_label(const Tensor& image) const {
  return classes_[predict(image)];
}

void Classifier::save(const fs::path& path) const {
  const json meta{{"classes", classes_},
                  {"image_size", image_size_},
                  {"network", network_spec_to_json(net_.spec())}};
  net_.to_weight_store(meta.dump()).save(path);
}

Classifier Classifier::load(const fs::path& path) {
  const WeightStore store = WeightStore::load(path);
  json meta;
  try {
    meta = json::parse(store.metadata_json());
    auto classes = meta.at("classes").get<std::vector<std::string>>();
    auto image_size = meta.at("image_size").get<std::size_t>();
    NetworkSpec spec = network_spec_from_json(meta.at("network"));
    return Classifier(Network::bind(std::move(spec), store), std::move(classes),
                      image_size);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": not a classifier model (" + e.what() +
                      ")");
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

class AdamState {
 public:
  AdamState(const std::vector<LayerParams>& params, const TrainConfig& cfg)
      : cfg_(cfg) {
    for (const LayerParams& p : params) {
      m_.push_back({Tensor(p.weights.empty() ? Shape{1} : p.weights.shape()),
                    Tensor(p.bias.empty() ? Shape{1} : p.bias.shape())});
      v_.push_back(m_.back());
    }
  }

  void step(std::vector<LayerParams>& params, const ParamGrads& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!grads[i]) continue;
      update(params[i].weights, grads[i]->weights, m_[i].weights, v_[i].weights,
             c1, c2);
      update(params[i].bias, grads[i]->bias, m_[i].bias, v_[i].bias, c1, c2);
    }
  }

 private:
  void update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, double c1,
              double c2) const {
    const float b1 = static_cast<float>(cfg_.beta1);
    const float b2 = static_cast<float>(cfg_.beta2);
    const float lr = static_cast<float>(cfg_.learning_rate / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(cfg_.epsilon);
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      p[k] -= lr * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
    }
  }

  TrainConfig cfg_;
  std::vector<LayerParams> m_, v_;
  std::uint64_t t_ = 0;
};

void accumulate(ParamGrads& total, ParamGrads&& sample) {
  for (std::size_t i = 0; i < total.size(); ++i) {
    if (!sample[i]) continue;
    if (!total[i]) {
      total[i] = std::move(sample[i]);
    } else {
      total[i]->weights += sample[i]->weights;
      total[i]->bias += sample[i]->bias;
    }
  }
}

double accuracy(const Classifier& clf, const std::vector<LabelledImage>& data,
                const std::vector<std::size_t>& idx,
                const std::vector<std::size_t>& labels) {
  if (idx.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : idx) hits += clf.predict(data[i].image) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

// Stream ids for derive_seed.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kEpochStream = 3;
constexpr std::uint64_t kDropoutStream = 4;

}  // namespace

TrainedModel train(const std::vector<LabelledImage>& data,
                   const NetworkSpec& extractor, const TrainConfig& cfg,
                   std::size_t run_index) {
  cfg.validate();
  std::set<std::string> label_set;
  for (const auto& d : data) label_set.insert(d.label);
  if (label_set.size() < 2) {
    throw ConfigError("training needs at least two classes, found " +
                      std::to_string(label_set.size()));
  }
  const std::vector<std::string> classes(label_set.begin(), label_set.end());
  std::vector<std::size_t> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    labels[i] = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), data[i].label) -
        classes.begin());
    if (data[i].image.shape() != Shape{extractor.input_channels, cfg.image_size,
                                       cfg.image_size}) {
      throw ShapeMismatch("training image " + std::to_string(i) + " has shape " +
                          shape_to_string(data[i].image.shape()));
    }
  }

  const std::uint64_t run_seed = derive_seed(cfg.seed, run_index);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng(derive_seed(run_seed, kSplitStream)).shuffle(order);
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(cfg.validation_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  if (train_idx.empty()) throw ConfigError("training split is empty");

  const NetworkSpec spec =
      classifier_spec(extractor, classes.size(), cfg.image_size, cfg.dropout);
  Classifier clf(
      Network::bind(spec, Network::random_weights(
                              spec, derive_seed(run_seed, kInitStream),
                              cfg.image_size)),
      classes, cfg.image_size);
  const std::size_t fc = spec.index_of("fc");
  AdamState adam(clf.network().params(), cfg);

  TrainSummary summary;
  summary.train_size = train_idx.size();
  summary.validation_size = val.size();
  std::uint64_t sample_counter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(derive_seed(run_seed, kEpochStream), epoch));
    std::vector<std::size_t> epoch_order = train_idx;
    rng.shuffle(epoch_order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < epoch_order.size();
         start += cfg.batch_size) {
      const std::size_t end =
          std::min(start + cfg.batch_size, epoch_order.size());
      const float inv_batch = 1.0f / static_cast<float>(end - start);
      ParamGrads batch_grads(spec.layers.size());
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = epoch_order[b];
        const Tensor* image = &data[i].image;
        Tensor augmented;
        const std::size_t pick = static_cast<std::size_t>(
            rng.below(cfg.augment_ops.size() + 1));
        if (pick < cfg.augment_ops.size()) {
          augmented = traditional_augment(*image, cfg.augment_ops[pick]);
          image = &augmented;
        }
        const Tape tape = clf.network().forward(
            *image, Mode::kTrain,
            derive_seed(derive_seed(run_seed, kDropoutStream), sample_counter++),
            fc);
        const Tensor probs = softmax_forward(tape.values.back());
        const double loss =
            -std::log(std::max(static_cast<double>(probs[labels[i]]), 1e-30));
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite training loss in epoch " +
                             std::to_string(epoch + 1));
        }
        epoch_loss += loss;
        Tensor grad = probs;
        grad[labels[i]] -= 1.0f;
        grad *= inv_batch;
        accumulate(batch_grads,
                   clf.network().backward(tape, {{fc, std::move(grad)}}, true)
                       .params);
      }
      adam.step(clf.network().params(), batch_grads);
    }
    epoch_loss /= static_cast<double>(epoch_order.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("non-finite training loss in epoch " +
                         std::to_string(epoch + 1));
    }
    summary.epoch_loss.push_back(epoch_loss);
  }
  for (const LayerParams& p : clf.network().params()) {
    if (!p.weights.empty() && !all_finite(p.weights)) {
      throw NumericError("training produced non-finite weights");
    }
  }
  summary.train_accuracy = accuracy(clf, data, train_idx, labels);
  summary.validation_accuracy = accuracy(clf, data, val, labels);
  return {std::move(clf), std::move(summary)};
}

TrainedModel train(const DatasetManifest& manifest, const NetworkSpec& extractor,
                   const TrainConfig& cfg, std::size_t run_index) {
  cfg.validate();
  return train(load_manifest_images(manifest, cfg.image_size), extractor, cfg,
               run_index);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::string_view metric_name(Metric metric) {
  return metric == Metric::kTruePositiveRate ? "tp_rate" : "fp_rate";
}

Metric parse_metric(std::string_view name) {
  if (name == "tp_rate" || name == "tp") return Metric::kTruePositiveRate;
  if (name == "fp_rate" || name == "fp") return Metric::kFalsePositiveRate;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

RateCount evaluate(const Classifier& classifier,
                   const std::vector<LabelledImage>& test,
                   const std::string& positive_class, Metric metric) {
  if (test.empty()) throw ConfigError("test set is empty");
  const auto& classes = classifier.classes();
  if (std::find(classes.begin(), classes.end(), positive_class) == classes.end()) {
    throw ConfigError("positive class '" + positive_class +
                      "' is not one of the classifier's classes");
  }
  RateCount count;
  for (const LabelledImage& item : test) {
    const bool is_positive = item.label == positive_class;
    if (is_positive != (metric == Metric::kTruePositiveRate)) continue;
    ++count.total;
    count.hits += classifier.predict_label(item.image) == positive_class;
  }
  if (count.total == 0) {
    throw ConfigError(metric == Metric::kTruePositiveRate
                          ? "test set has no positive images"
                          : "test set has no negative images");
  }
  return count;
}

std::pair<double, double> mean_and_stddev(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

const EvalCell* EvalReport::find(std::string_view model,
                                 std::string_view test_set,
                                 Metric metric) const {
  for (const EvalCell& c : cells) {
    if (c.model == model && c.test_set == test_set && c.metric == metric) return &c;
  }
  return nullptr;
}

std::string EvalReport::to_json() const {
  json arr = json::array();
  for (const EvalCell& c : cells) {
    arr.push_back({{"model", c.model},
                   {"test_set", c.test_set},
                   {"metric", metric_name(c.metric)},
                   {"mean", c.mean},
                   {"std", c.stddev},
                   {"per_run", c.per_run}});
  }
  return json{{"cells", arr}}.dump(2) + "\n";
}

EvalReport EvalReport::from_json(std::string_view text) {
  EvalReport report;
  try {
    const json j = json::parse(text);
    for (const json& c : j.at("cells")) {
      report.cells.push_back({c.at("model").get<std::string>(),
                              c.at("test_set").get<std::string>(),
                              parse_metric(c.at("metric").get<std::string>()),
                              c.at("mean").get<double>(), c.at("std").get<double>(),
                              c.at("per_run").get<std::vector<double>>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string EvalReport::to_table() const {
  std::vector<std::string> models;
  std::vector<std::pair<std::string, Metric>> rows;
  for (const EvalCell& c : cells) {
    if (std::find(models.begin(), models.end(), c.model) == models.end()) {
      models.push_back(c.model);
    }
    const std::pair<std::string, Metric> row{c.test_set, c.metric};
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
  }
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"TASK"});
  for (const auto& m : models) grid[0].push_back(m);
  for (const auto& [test, metric] : rows) {
    std::vector<std::string> line{test + " (" + std::string(metric_name(metric)) + ")"};
    for (const auto& m : models) {
      const EvalCell* c = find(m, test, metric);
      if (!c) {
        line.push_back("-");
        continue;
      }
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << c->mean << "±" << c->stddev;
      line.push_back(cell.str());
    }
    grid.push_back(std::move(line));
  }
  // "±" is two bytes in UTF-8 but one column wide.
  auto display_width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(grid[0].size(), 0);
  for (const auto& line : grid)
    for (std::size_t i = 0; i < line.size(); ++i)
      widths[i] = std::max(widths[i], display_width(line[i]));
  std::ostringstream os;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t i = 0; i < grid[r].size(); ++i) {
      os << (i ? " | " : "") << grid[r][i]
         << std::string(widths[i] - display_width(grid[r][i]), ' ');
    }
    os << '\n';
    if (r == 0) {
      for (std::size_t i = 0; i < widths.size(); ++i) {
        os << (i ? "-+-" : "") << std::string(widths[i], '-');
      }
      os << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

EvalReport run_experiment(const std::vector<ModelSpec>& models,
                          const std::vector<TestSpec>& tests,
                          const std::string& positive_class,
                          const NetworkSpec& extractor, const TrainConfig& cfg) {
  cfg.validate();
  if (models.empty()) throw ConfigError("no models to evaluate");
  EvalReport report;
  for (const ModelSpec& model : models) {
    const auto data = load_manifest_images(model.manifest, cfg.image_size);
    // rates[run][test]
    std::vector<std::vector<double>> rates(cfg.runs,
                                           std::vector<double>(tests.size()));
    parallel_for(cfg.runs, cfg.threads, [&](std::size_t run) {
      const TrainedModel trained = train(data, extractor, cfg, run);
      for (std::size_t t = 0; t < tests.size(); ++t) {
        rates[run][t] = evaluate(trained.classifier, tests[t].images,
                                 positive_class, tests[t].metric)
                            .rate();
      }
    });
    for (std::size_t t = 0; t < tests.size(); ++t) {
      EvalCell cell;
      cell.model = model.name;
      cell.test_set = tests[t].name;
      cell.metric = tests[t].metric;
      for (std::size_t run = 0; run < cfg.runs; ++run) {
        cell.per_run.push_back(rates[run][t]);
      }
      std::tie(cell.mean, cell.stddev) = mean_and_stddev(cell.per_run);
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::map<std::size_t, EvalReport> iteration_ablation(
    const std::vector<std::size_t>& iterations, const AugmentationPlan& plan,
    const std::vector<TestSpec>& tests, const NetworkSpec& extractor,
    const TrainConfig& cfg) {
  if (iterations.empty()) throw ConfigError("iteration list is empty");
  const auto manifests = build_composite_per_iteration(plan, iterations);
  std::map<std::size_t, EvalReport> out;
  for (const auto& [k, manifest] : manifests) {
    out.emplace(k, run_experiment({{"iter_" + std::to_string(k), manifest}}, tests,
                                  plan.target_class, extractor, cfg));
  }
  return out;
}

}  // namespace styleaug

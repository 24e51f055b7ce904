#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "styleaug/dataset.hpp"
#include "styleaug/image.hpp"
#include "styleaug/network.hpp"

namespace styleaug {

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  float dropout = 0.5f;
  std::size_t batch_size = 16;
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  /// Each training sample gets one of these ops (or none) uniformly at random.
  std::vector<GeometricOp> augment_ops{GeometricOp::kRot90, GeometricOp::kRot180,
                                       GeometricOp::kRot270, GeometricOp::kFlipH,
                                       GeometricOp::kFlipV};
  double validation_fraction = 0.2;
  std::size_t image_size = 16;
  std::size_t threads = 1;  // parallel runs in run_experiment

  void validate() const;
};

struct LabelledImage {
  Tensor image;
  std::string label;
};

/// Images of a manifest, resized to `image_size`.
std::vector<LabelledImage> load_manifest_images(const DatasetManifest& manifest,
                                                std::size_t image_size);
/// Images of a `<root>/<class>/*.png` tree, resized to `image_size`.
std::vector<LabelledImage> load_labelled_folder(const std::filesystem::path& root,
                                                std::size_t image_size);

/// Feature extractor + classification head with its class names.
class Classifier {
 public:
  Classifier(Network net, std::vector<std::string> classes,
             std::size_t image_size);

  const Network& network() const noexcept { return net_; }
  Network& network() noexcept { return net_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t image_size() const noexcept { return image_size_; }

  /// Class scores before softmax, eval mode.
  Tensor logits(const Tensor& image) const;
  std::size_t predict(const Tensor& image) const;
  const std::string& predict_label(const Tensor& image) const;

  /// STWB file with classes, image size and network spec in the metadata.
  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

 private:
  Network net_;
  std::vector<std::string> classes_;
  std::size_t image_size_;
  std::size_t logits_index_;
};

struct TrainSummary {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  double train_accuracy = 0.0;      // on the training split, eval mode
  double validation_accuracy = 0.0; // NaN-free; 0 when the split is empty
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
};

struct TrainedModel {
  Classifier classifier;
  TrainSummary summary;
};

/// Cross-entropy training of classifier_spec(extractor) with adaptive-moment
/// updates, seeded per-sample geometric augmentation and dropout. Deterministic
/// in (cfg.seed, run_index). Throws NumericError on a non-finite loss.
TrainedModel train(const std::vector<LabelledImage>& data,
                   const NetworkSpec& extractor, const TrainConfig& cfg,
                   std::size_t run_index = 0);
TrainedModel train(const DatasetManifest& manifest, const NetworkSpec& extractor,
                   const TrainConfig& cfg, std::size_t run_index = 0);

enum class Metric { kTruePositiveRate, kFalsePositiveRate };
std::string_view metric_name(Metric metric);
Metric parse_metric(std::string_view name);

struct RateCount {
  std::size_t hits = 0;   // predicted positive
  std::size_t total = 0;  // images of the relevant population
  double rate() const { return static_cast<double>(hits) / total; }
};

/// TP rate: share of `positive_class` images predicted positive (throws
/// ConfigError when there are none). FP rate: share of the remaining images
/// predicted positive (throws when there are none).
RateCount evaluate(const Classifier& classifier,
                   const std::vector<LabelledImage>& test,
                   const std::string& positive_class, Metric metric);

struct EvalCell {
  std::string model;
  std::string test_set;
  Metric metric = Metric::kTruePositiveRate;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
  std::vector<double> per_run;
};

struct EvalReport {
  std::vector<EvalCell> cells;

  const EvalCell* find(std::string_view model, std::string_view test_set,
                       Metric metric) const;
  std::string to_json() const;
  static EvalReport from_json(std::string_view text);
  /// Test sets as rows, models as columns, "mean±std" cells.
  std::string to_table() const;
};

/// Mean and sample standard deviation.
std::pair<double, double> mean_and_stddev(const std::vector<double>& values);

struct TestSpec {
  std::string name;
  std::vector<LabelledImage> images;
  Metric metric = Metric::kTruePositiveRate;
};

struct ModelSpec {
  std::string name;
  DatasetManifest manifest;
};

/// cfg.runs independent train/evaluate cycles per model. Run r uses
/// run_index r for every model, so identical manifests give identical cells.
EvalReport run_experiment(const std::vector<ModelSpec>& models,
                          const std::vector<TestSpec>& tests,
                          const std::string& positive_class,
                          const NetworkSpec& extractor, const TrainConfig& cfg);

/// Builds one styled composite per iteration count and evaluates each as
/// model "iter_<k>". Rows depend only on k, not on list order.
std::map<std::size_t, EvalReport> iteration_ablation(
    const std::vector<std::size_t>& iterations, const AugmentationPlan& plan,
    const std::vector<TestSpec>& tests, const NetworkSpec& extractor,
    const TrainConfig& cfg);

}  // namespace styleaug

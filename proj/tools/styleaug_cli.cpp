// styleaug command line: style transfer, dataset compositing, classifier
// training and evaluation, full experiments and the synthetic benchmark.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "styleaug/benchmark.hpp"
#include "styleaug/classifier.hpp"
#include "styleaug/dataset.hpp"
#include "styleaug/errors.hpp"
#include "styleaug/experiment.hpp"
#include "styleaug/image.hpp"
#include "styleaug/serialization.hpp"
#include "styleaug/transfer.hpp"

using namespace styleaug;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

TransferConfig load_transfer_config(const std::string& file) {
  return file.empty() ? TransferConfig{} : transfer_config_from_json(read_json_file(file));
}

TrainConfig load_train_config(const std::string& file) {
  return file.empty() ? TrainConfig{} : train_config_from_json(read_json_file(file));
}

struct TransferArgs {
  std::string content, reference, out, config, weights;
  std::vector<std::size_t> snapshots;
  std::optional<std::uint64_t> seed;
};

void run_transfer(const TransferArgs& a) {
  TransferConfig cfg = load_transfer_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.snapshots.empty()) cfg.snapshot_iterations = {a.snapshots.begin(), a.snapshots.end()};
  const Tensor content = load_image(a.content);
  const Tensor reference =
      resize_bilinear(load_image(a.reference), content.dim(1), content.dim(2));
  AugmentationPlan plan;
  plan.transfer = cfg;
  plan.image_size = content.dim(1);
  if (!a.weights.empty()) plan.weights = a.weights;
  const Network net = synthesis_network(plan);
  const TransferResult r = synthesize(net, prepare_targets(net, content, reference, cfg), cfg);

  const fs::path out = a.out;
  fs::create_directories(out);
  save_image(r.image, out / "result.png");
  for (const auto& [k, img] : r.snapshots) {
    save_image(img, out / ("iter_" + std::to_string(k) + ".png"));
  }
  json trace = json::array();
  for (const LossRecord& rec : r.trace) {
    trace.push_back({{"content", rec.content}, {"style", rec.style}, {"tv", rec.tv}, {"total", rec.total}});
  }
  write_text_file(out / "trace.json",
                  json{{"config", transfer_config_to_json(cfg)}, {"trace", trace}}.dump(2) + "\n");
  std::cout << "loss " << r.trace.front().total << " -> " << r.trace.back().total << ", wrote "
            << (out / "result.png").string() << "\n";
}

struct AugmentArgs {
  std::string src, target_class, reference, out, config, weights, adverse_pool;
  double ratio = 0.2;
  std::uint64_t seed = 0;
  std::size_t image_size = 16;
  std::size_t threads = 0;
};

void run_augment(const AugmentArgs& a) {
  AugmentationPlan plan;
  plan.source_root = a.src;
  plan.target_class = a.target_class;
  plan.reference = a.reference;
  plan.ratio = a.ratio;
  plan.output_root = a.out;
  plan.seed = a.seed;
  plan.image_size = a.image_size;
  plan.threads = a.threads;
  plan.transfer = load_transfer_config(a.config);
  if (!a.weights.empty()) plan.weights = a.weights;
  DatasetManifest m;
  if (!a.adverse_pool.empty()) {
    plan.adverse_pool = a.adverse_pool;
    m = build_real_composite(plan);
  } else {
    if (a.reference.empty()) throw ConfigError("--reference is required without --adverse-pool");
    m = build_composite(plan);
  }
  std::cout << m.entries.size() << " entries, "
            << m.count(a.target_class, Origin::kStyled) + m.count(a.target_class, Origin::kAdverseReal)
            << " replaced, " << m.gaps.size() << " gaps; manifest "
            << (fs::path(a.out) / "manifest.json").string() << "\n";
  for (const ManifestGap& g : m.gaps) std::cerr << "gap: " << g.source << ": " << g.reason << "\n";
}

void run_train(const std::string& manifest, const std::string& config, const std::string& out,
               std::size_t run) {
  const TrainConfig cfg = load_train_config(config);
  const TrainedModel m = train(DatasetManifest::load(manifest), NetworkSpec::desk_default(), cfg, run);
  m.classifier.save(out);
  std::cout << "train accuracy " << m.summary.train_accuracy << ", validation accuracy "
            << m.summary.validation_accuracy << " (" << m.summary.validation_size
            << " held out); wrote " << out << "\n";
}

void run_evaluate(const std::string& model, const std::string& test, const std::string& positive) {
  const Classifier c = Classifier::load(model);
  const auto images = load_labelled_folder(test, c.image_size());
  bool any = false;
  for (Metric metric : {Metric::kTruePositiveRate, Metric::kFalsePositiveRate}) {
    const bool has_population =
        std::any_of(images.begin(), images.end(), [&](const LabelledImage& li) {
          return (li.label == positive) == (metric == Metric::kTruePositiveRate);
        });
    if (!has_population) continue;
    const RateCount r = evaluate(c, images, positive, metric);
    std::cout << metric_name(metric) << " " << r.rate() << " (" << r.hits << "/" << r.total << ")\n";
    any = true;
  }
  if (!any) throw ConfigError("test set " + test + " is empty");
}

void run_experiment_cmd(const std::string& plan_file, const std::string& out,
                        const std::string& table_file) {
  const ExperimentPlan plan = ExperimentPlan::load(plan_file);
  const ExperimentOutcome o =
      run_experiment_plan(plan, [](const std::string& m) { std::cerr << m << "\n"; });
  write_text_file(out, o.report.to_json());
  const std::string table = o.report.to_table();
  std::cout << table;
  if (!table_file.empty()) write_text_file(table_file, table);
  if (!o.ablation.empty()) {
    const fs::path ablation = fs::path(out).replace_extension(".ablation.json");
    write_text_file(ablation, ablation_to_json(o.ablation));
    for (const auto& [k, r] : o.ablation) std::cout << "\niterations " << k << "\n" << r.to_table();
  }
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kUsage:
      return kExitUsage;
    case ErrorKind::kData:
      return kExitData;
    case ErrorKind::kNumeric:
      return kExitNumeric;
  }
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style-transfer data augmentation for adverse-domain robustness"};
  app.require_subcommand(1);

  TransferArgs ta;
  auto* transfer = app.add_subcommand("transfer", "Stylize one image");
  transfer->add_option("--content", ta.content, "Content image (PNG)")->required();
  transfer->add_option("--reference", ta.reference, "Style reference (PNG)")->required();
  transfer->add_option("--out", ta.out, "Output directory")->required();
  transfer->add_option("--snapshots", ta.snapshots, "Iterations to snapshot")->delimiter(',');
  transfer->add_option("--config", ta.config, "TransferConfig JSON");
  transfer->add_option("--seed", ta.seed, "Synthesis seed");
  transfer->add_option("--weights", ta.weights, "Extractor weights (STWB)");

  AugmentArgs aa;
  auto* augment = app.add_subcommand("augment", "Build a composite dataset");
  augment->add_option("--src", aa.src, "Labelled source tree")->required();
  augment->add_option("--class", aa.target_class, "Target class")->required();
  augment->add_option("--reference", aa.reference, "Style reference (PNG)");
  augment->add_option("--ratio", aa.ratio, "Fraction of the class to replace");
  augment->add_option("--out", aa.out, "Output directory")->required();
  augment->add_option("--seed", aa.seed, "Master seed");
  augment->add_option("--adverse-pool", aa.adverse_pool, "Replace with real images from this folder");
  augment->add_option("--config", aa.config, "TransferConfig JSON");
  augment->add_option("--weights", aa.weights, "Extractor weights (STWB)");
  augment->add_option("--size", aa.image_size, "Synthesis resolution");
  augment->add_option("--threads", aa.threads, "Worker threads (0: hardware)");

  std::string manifest, train_config, model_out;
  std::size_t run = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on a manifest");
  train_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  train_cmd->add_option("--config", train_config, "TrainConfig JSON");
  train_cmd->add_option("--out", model_out, "Model file (STWB)")->required();
  train_cmd->add_option("--run", run, "Run index");

  std::string model, test_dir, positive;
  auto* eval_cmd = app.add_subcommand("evaluate", "TP/FP rates of a model on a labelled folder");
  eval_cmd->add_option("--model", model, "Model file")->required();
  eval_cmd->add_option("--test", test_dir, "Labelled test tree")->required();
  eval_cmd->add_option("--positive-class", positive, "Positive class")->required();

  std::string plan_file, report_out, table_out;
  auto* experiment = app.add_subcommand("experiment", "Train and evaluate models A, B and C");
  experiment->add_option("--plan", plan_file, "Experiment plan JSON")->required();
  experiment->add_option("--out", report_out, "Report JSON")->required();
  experiment->add_option("--table", table_out, "Also write the text table here");

  BenchmarkConfig bc;
  std::string bench_out;
  auto* bench = app.add_subcommand("benchmark", "Generate the synthetic clear/snow benchmark");
  bench->add_option("--out", bench_out, "Output root")->required();
  bench->add_option("--images-per-class", bc.images_per_class);
  bench->add_option("--adverse-pool-size", bc.adverse_pool_size);
  bench->add_option("--test-size", bc.test_size);
  bench->add_option("--size", bc.image_size);
  bench->add_option("--snow", bc.snow, "Snow strength in [0, 1]");
  bench->add_option("--seed", bc.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*transfer) run_transfer(ta);
    if (*augment) run_augment(aa);
    if (*train_cmd) run_train(manifest, train_config, model_out, run);
    if (*eval_cmd) run_evaluate(model, test_dir, positive);
    if (*experiment) run_experiment_cmd(plan_file, report_out, table_out);
    if (*bench) {
      generate_benchmark(bench_out, bc);
      std::cout << "wrote " << bench_out << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

#include "styleaug/experiment.hpp"

#include <set>

#include "styleaug/errors.hpp"
#include "styleaug/serialization.hpp"

namespace fs = std::filesystem;

namespace styleaug {

using nlohmann::json;

void ExperimentPlan::validate() const {
  if (target_class.empty()) throw ConfigError("plan: target_class is empty");
  if (tests.empty()) throw ConfigError("plan: no test sets");
  if (work_dir.empty()) throw ConfigError("plan: work_dir is empty");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("plan: ratio must lie in [0, 1]");
  std::set<std::string> names;
  for (const TestSetSpec& t : tests) {
    if (!names.insert(t.name).second) {
      throw ConfigError("plan: duplicate test set '" + t.name + "'");
    }
  }
  for (std::size_t k : ablation) {
    if (k < 1) throw ConfigError("plan: ablation iteration counts must be >= 1");
  }
  if (train.image_size != image_size) {
    throw ConfigError("plan: train.image_size must equal image_size");
  }
  transfer.validate();
  train.validate();
}

ExperimentPlan ExperimentPlan::from_json(const json& j, const fs::path& base) {
  static const std::set<std::string> known{
      "source_root", "target_class", "reference", "adverse_pool", "weights",
      "ratio",       "seed",         "image_size", "threads",     "transfer",
      "train",       "tests",        "work_dir",   "ablation"};
  if (!j.is_object()) throw ConfigError("plan must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("plan: unknown key '" + key + "'");
  }
  auto path = [&](const char* key) -> fs::path {
    if (!j.contains(key)) throw ConfigError(std::string("plan: missing '") + key + "'");
    const fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
  };

  ExperimentPlan plan;
  try {
    plan.source_root = path("source_root");
    plan.target_class = j.at("target_class").get<std::string>();
    plan.reference = path("reference");
    plan.adverse_pool = path("adverse_pool");
    plan.work_dir = path("work_dir");
    if (j.contains("weights")) plan.weights = path("weights");
    plan.ratio = j.value("ratio", plan.ratio);
    plan.seed = j.value("seed", plan.seed);
    plan.image_size = j.value("image_size", plan.image_size);
    plan.threads = j.value("threads", plan.threads);
    plan.ablation = j.value("ablation", plan.ablation);
    for (const json& t : j.at("tests")) {
      TestSetSpec spec;
      spec.name = t.at("name").get<std::string>();
      const fs::path dir = t.at("dir").get<std::string>();
      spec.dir = dir.is_absolute() ? dir : base / dir;
      spec.metric = parse_metric(t.at("metric").get<std::string>());
      plan.tests.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  }
  if (j.contains("transfer")) plan.transfer = transfer_config_from_json(j.at("transfer"));
  plan.train.image_size = plan.image_size;
  if (j.contains("train")) {
    json train = j.at("train");
    if (!train.contains("image_size")) train["image_size"] = plan.image_size;
    plan.train = train_config_from_json(train);
  }
  plan.validate();
  return plan;
}

ExperimentPlan ExperimentPlan::load(const fs::path& file) {
  return from_json(read_json_file(file), file.parent_path());
}

AugmentationPlan ExperimentPlan::augmentation(const fs::path& output_root) const {
  AugmentationPlan a;
  a.source_root = source_root;
  a.target_class = target_class;
  a.reference = reference;
  a.ratio = ratio;
  a.transfer = transfer;
  a.output_root = output_root;
  a.seed = seed;
  a.image_size = image_size;
  a.weights = weights;
  a.threads = threads;
  return a;
}

ExperimentOutcome run_experiment_plan(const ExperimentPlan& plan,
                                      const ProgressFn& progress) {
  plan.validate();
  auto note = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  ExperimentOutcome out;
  AugmentationPlan vanilla = plan.augmentation(plan.work_dir / "A");
  vanilla.ratio = 0.0;
  note("building vanilla dataset");
  out.vanilla = build_composite(vanilla);
  note("building styled composite");
  out.styled = build_composite(plan.augmentation(plan.work_dir / "B"));
  AugmentationPlan real = plan.augmentation(plan.work_dir / "C");
  real.adverse_pool = plan.adverse_pool;
  note("building adverse-real composite");
  out.adverse_real = build_real_composite(real);

  std::vector<TestSpec> tests;
  for (const TestSetSpec& t : plan.tests) {
    tests.push_back({t.name, load_labelled_folder(t.dir, plan.image_size), t.metric});
  }
  const NetworkSpec extractor = NetworkSpec::desk_default();
  const std::vector<std::pair<std::string_view, const DatasetManifest*>> models{
      {kModelA, &out.vanilla}, {kModelB, &out.styled}, {kModelC, &out.adverse_real}};
  for (const auto& [name, manifest] : models) {
    note("training " + std::string(name) + " (" + std::to_string(plan.train.runs) +
         " runs)");
    EvalReport part = run_experiment({{std::string(name), *manifest}}, tests,
                                     plan.target_class, extractor, plan.train);
    for (EvalCell& c : part.cells) out.report.cells.push_back(std::move(c));
  }

  if (!plan.ablation.empty()) {
    note("running iteration ablation");
    out.ablation = iteration_ablation(plan.ablation,
                                      plan.augmentation(plan.work_dir / "ablation"),
                                      tests, extractor, plan.train);
  }
  return out;
}

std::string ablation_to_json(const std::map<std::size_t, EvalReport>& rows) {
  json j = json::object();
  for (const auto& [k, report] : rows) {
    j[std::to_string(k)] = json::parse(report.to_json());
  }
  return j.dump(2) + "\n";
}

}  // namespace styleaug

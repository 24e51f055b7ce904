#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "styleaug/classifier.hpp"
#include "styleaug/dataset.hpp"

namespace styleaug {

struct TestSetSpec {
  std::string name;
  std::filesystem::path dir;  // labelled folder tree
  Metric metric = Metric::kTruePositiveRate;
};

/// Models A (vanilla), B (styled replacement) and C (adverse-real
/// replacement) over a shared source tree, evaluated on every test set.
struct ExperimentPlan {
  std::filesystem::path source_root;
  std::string target_class;
  std::filesystem::path reference;
  std::filesystem::path adverse_pool;
  std::optional<std::filesystem::path> weights;
  double ratio = 0.2;
  std::uint64_t seed = 0;
  std::size_t image_size = 16;
  std::size_t threads = 0;
  TransferConfig transfer;
  TrainConfig train;
  std::vector<TestSetSpec> tests;
  std::filesystem::path work_dir;  // composites land here
  /// Iteration counts for the ablation; skipped when empty.
  std::vector<std::size_t> ablation;

  void validate() const;
  /// Relative paths resolve against `base`.
  static ExperimentPlan from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base);
  static ExperimentPlan load(const std::filesystem::path& file);

  AugmentationPlan augmentation(const std::filesystem::path& output_root) const;
};

struct ExperimentOutcome {
  DatasetManifest vanilla;
  DatasetManifest styled;
  DatasetManifest adverse_real;
  EvalReport report;
  std::map<std::size_t, EvalReport> ablation;
};

inline constexpr std::string_view kModelA = "A_vanilla";
inline constexpr std::string_view kModelB = "B_styled";
inline constexpr std::string_view kModelC = "C_adverse_real";

using ProgressFn = std::function<void(const std::string&)>;

/// Builds the three composites, trains and evaluates each model train.runs
/// times, then runs the ablation if requested.
ExperimentOutcome run_experiment_plan(const ExperimentPlan& plan,
                                      const ProgressFn& progress = {});

/// Ablation rows as JSON: {"<k>": <EvalReport>, ...}.
std::string ablation_to_json(const std::map<std::size_t, EvalReport>& rows);

}  // namespace styleaug

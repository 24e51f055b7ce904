#include <gtest/gtest.h>

#include "styleaug/benchmark.hpp"
#include "styleaug/errors.hpp"
#include "styleaug/experiment.hpp"
#include "support.hpp"

using namespace styleaug;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_plan_json() {
  return json{{"source_root", "bm/train"},
              {"target_class", "vehicle"},
              {"reference", "bm/reference.png"},
              {"adverse_pool", "bm/adverse_pool"},
              {"work_dir", "work"},
              {"seed", 3},
              {"image_size", 8},
              {"transfer", {{"iterations", 2}, {"steps_per_iteration", 3}}},
              {"train", {{"runs", 2}, {"epochs", 1}}},
              {"tests",
               {{{"name", "adverse"}, {"dir", "bm/test_adverse"}, {"metric", "tp_rate"}},
                {{"name", "negatives"}, {"dir", "bm/test_negatives"}, {"metric", "fp"}}}}};
}

fs::path tiny_benchmark(const std::string& name) {
  const fs::path root = test::scratch_dir(name);
  BenchmarkConfig cfg;
  cfg.images_per_class = 10;
  cfg.adverse_pool_size = 4;
  cfg.test_size = 4;
  cfg.image_size = 8;
  generate_benchmark(root / "bm", cfg);
  return root;
}

}  // namespace

TEST(ExperimentPlan, ParsesAndResolvesPaths) {
  const ExperimentPlan p = ExperimentPlan::from_json(tiny_plan_json(), "/data");
  EXPECT_EQ(p.source_root, fs::path("/data/bm/train"));
  EXPECT_EQ(p.tests.size(), 2u);
  EXPECT_EQ(p.tests[1].metric, Metric::kFalsePositiveRate);
  EXPECT_EQ(p.train.image_size, 8u);
  EXPECT_EQ(p.train.runs, 2u);
  EXPECT_EQ(p.transfer.iterations, 2u);
  EXPECT_EQ(p.ratio, 0.2);
  const AugmentationPlan a = p.augmentation("/out");
  EXPECT_EQ(a.output_root, fs::path("/out"));
  EXPECT_EQ(p.adverse_pool, fs::path("/data/bm/adverse_pool"));
  EXPECT_FALSE(a.adverse_pool.has_value());
}

TEST(ExperimentPlan, Rejections) {
  json j = tiny_plan_json();
  j["colour"] = "red";
  EXPECT_THROW(ExperimentPlan::from_json(j, "/"), ConfigError);
  j = tiny_plan_json();
  j.erase("reference");
  EXPECT_THROW(ExperimentPlan::from_json(j, "/"), ConfigError);
  j = tiny_plan_json();
  j["ratio"] = 2.0;
  EXPECT_THROW(ExperimentPlan::from_json(j, "/"), ConfigError);
  j = tiny_plan_json();
  j["train"]["image_size"] = 16;
  EXPECT_THROW(ExperimentPlan::from_json(j, "/"), ConfigError);
}

TEST(RunExperimentPlan, TinyEndToEndWithAblation) {
  const fs::path root = tiny_benchmark("experiment_tiny");
  json j = tiny_plan_json();
  j["ablation"] = {2, 1};
  const ExperimentPlan plan = ExperimentPlan::from_json(j, root);
  std::vector<std::string> log;
  const ExperimentOutcome out =
      run_experiment_plan(plan, [&](const std::string& m) { log.push_back(m); });
  EXPECT_FALSE(log.empty());
  EXPECT_EQ(out.vanilla.count("vehicle", Origin::kStyled), 0u);
  EXPECT_EQ(out.styled.count("vehicle", Origin::kStyled), 2u);
  EXPECT_EQ(out.adverse_real.count("vehicle", Origin::kAdverseReal), 2u);
  EXPECT_EQ(out.report.cells.size(), 6u);
  for (std::string_view model : {kModelA, kModelB, kModelC}) {
    const EvalCell* c = out.report.find(model, "adverse", Metric::kTruePositiveRate);
    ASSERT_NE(c, nullptr) << model;
    EXPECT_EQ(c->per_run.size(), 2u);
    for (double v : c->per_run) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  ASSERT_EQ(out.ablation.size(), 2u);
  EXPECT_NE(out.ablation.at(1).find("iter_1", "negatives", Metric::kFalsePositiveRate), nullptr);
  const json rows = json::parse(ablation_to_json(out.ablation));
  EXPECT_TRUE(rows.contains("1"));
  EXPECT_TRUE(rows.contains("2"));
}

TEST(IterationAblation, RowsIndependentOfListOrder) {
  const fs::path root = tiny_benchmark("ablation_order");
  const ExperimentPlan plan = ExperimentPlan::from_json(tiny_plan_json(), root);
  TrainConfig cfg = plan.train;
  cfg.runs = 1;
  std::vector<TestSpec> tests;
  for (const TestSetSpec& t : plan.tests) {
    tests.push_back({t.name, load_labelled_folder(t.dir, 8), t.metric});
  }
  const NetworkSpec spec = NetworkSpec::desk_default();
  const auto one = iteration_ablation({1}, plan.augmentation(root / "abl1"), tests, spec, cfg);
  const auto both =
      iteration_ablation({2, 1}, plan.augmentation(root / "abl2"), tests, spec, cfg);
  ASSERT_EQ(one.size(), 1u);
  ASSERT_EQ(both.size(), 2u);
  EXPECT_EQ(one.at(1).to_json(), both.at(1).to_json());
  EXPECT_EQ(one.at(1).to_table().find("iter_1") != std::string::npos, true);
}

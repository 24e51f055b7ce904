#include <gtest/gtest.h>

#include "styleaug/errors.hpp"
#include "styleaug/serialization.hpp"
#include "support.hpp"

using namespace styleaug;
using nlohmann::json;

TEST(TransferConfigJson, RoundTrip) {
  TransferConfig cfg;
  cfg.iterations = 4;
  cfg.snapshot_iterations = {1, 4};
  cfg.optimizer.kind = OptimizerKind::kGradientDescent;
  cfg.init = InitKind::kContentCopy;
  cfg.seed = 12345678901234ull;
  cfg.weights.tv_weight = 0.0;
  const json j = transfer_config_to_json(cfg);
  const TransferConfig back = transfer_config_from_json(j);
  EXPECT_EQ(transfer_config_to_json(back), j);
  EXPECT_EQ(back.iterations, 4u);
  EXPECT_EQ(back.init, InitKind::kContentCopy);
  EXPECT_EQ(back.seed, cfg.seed);
}

TEST(TransferConfigJson, PartialAndUnknown) {
  const TransferConfig partial = transfer_config_from_json(json{{"iterations", 2}});
  EXPECT_EQ(partial.iterations, 2u);
  EXPECT_EQ(partial.steps_per_iteration, TransferConfig{}.steps_per_iteration);
  EXPECT_THROW(transfer_config_from_json(json{{"iteratons", 2}}), ConfigError);
  EXPECT_THROW(transfer_config_from_json(json{{"init", "zeros"}}), ConfigError);
  EXPECT_THROW(transfer_config_from_json(json{{"iterations", "many"}}), ConfigError);
  EXPECT_THROW(transfer_config_from_json(json::array()), ConfigError);
}

TEST(NetworkSpecJson, RoundTripDeskAndClassifier) {
  const NetworkSpec desk = NetworkSpec::desk_default();
  EXPECT_EQ(network_spec_to_json(network_spec_from_json(network_spec_to_json(desk))),
            network_spec_to_json(desk));
  const NetworkSpec head = classifier_spec(desk, 4, 16, 0.5f);
  const NetworkSpec back = network_spec_from_json(network_spec_to_json(head));
  ASSERT_EQ(back.layers.size(), head.layers.size());
  for (std::size_t i = 0; i < back.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].tag, head.layers[i].tag);
    EXPECT_EQ(layer_name(back.layers[i].kind), layer_name(head.layers[i].kind));
  }
}

TEST(TrainConfigJson, RoundTripAndValidation) {
  TrainConfig cfg;
  cfg.runs = 3;
  cfg.augment_ops = {GeometricOp::kFlipH};
  const json j = train_config_to_json(cfg);
  EXPECT_EQ(train_config_to_json(train_config_from_json(j)), j);
  EXPECT_THROW(train_config_from_json(json{{"epochs", 0}}), ConfigError);
  EXPECT_THROW(train_config_from_json(json{{"optimizer", "sgd"}}), ConfigError);
}

TEST(JsonFiles, Errors) {
  const auto dir = test::scratch_dir("json_files");
  EXPECT_THROW(read_json_file(dir / "missing.json"), IoError);
  write_text_file(dir / "bad.json", "{ not json");
  EXPECT_THROW(read_json_file(dir / "bad.json"), ConfigError);
  write_text_file(dir / "ok.json", "{\"a\": 1}");
  EXPECT_EQ(read_json_file(dir / "ok.json").at("a"), 1);
}

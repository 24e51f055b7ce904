#include <gtest/gtest.h>

#include "styleaug/benchmark.hpp"
#include "styleaug/dataset.hpp"
#include "styleaug/errors.hpp"
#include "styleaug/image.hpp"
#include "support.hpp"

using namespace styleaug;
namespace fs = std::filesystem;

namespace {

double mean(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s / static_cast<double>(t.size());
}

}  // namespace

TEST(Benchmark, DrawingIsSeededAndBounded) {
  for (Glyph g : {Glyph::kVehicle, Glyph::kTower, Glyph::kFlower, Glyph::kBall}) {
    const Tensor a = draw_glyph_image(g, 16, 3);
    EXPECT_EQ(a.shape(), (Shape{3, 16, 16}));
    EXPECT_EQ(a, draw_glyph_image(g, 16, 3));
    EXPECT_NE(a, draw_glyph_image(g, 16, 4));
    for (float v : a.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  EXPECT_NE(draw_glyph_image(Glyph::kVehicle, 16, 3), draw_glyph_image(Glyph::kBall, 16, 3));
  EXPECT_THROW(parse_glyph("boat"), ConfigError);
  EXPECT_EQ(parse_glyph("flower"), Glyph::kFlower);
}

TEST(Benchmark, SnowBrightensAndZeroIsIdentity) {
  const Tensor img = draw_glyph_image(Glyph::kVehicle, 16, 1);
  EXPECT_EQ(add_snow(img, 0.0f, 2), img);
  EXPECT_GT(mean(add_snow(img, 0.8f, 2)), mean(img));
  EXPECT_GT(mean(add_snow(img, 0.8f, 2)), mean(add_snow(img, 0.3f, 2)));
}

TEST(Benchmark, LayoutAndDeterminism) {
  BenchmarkConfig cfg;
  cfg.images_per_class = 4;
  cfg.adverse_pool_size = 3;
  cfg.test_size = 2;
  cfg.image_size = 8;
  const fs::path a = test::scratch_dir("bench_a");
  const fs::path b = test::scratch_dir("bench_b");
  generate_benchmark(a, cfg);
  generate_benchmark(b, cfg);
  const auto train = list_labelled_images(a / "train");
  ASSERT_EQ(train.size(), 4u);
  for (const auto& [label, files] : train) EXPECT_EQ(files.size(), 4u) << label;
  EXPECT_EQ(list_images(a / "adverse_pool").size(), 3u);
  EXPECT_EQ(list_images(a / "test_adverse" / "vehicle").size(), 2u);
  EXPECT_EQ(list_images(a / "test_negatives" / "background").size(), 2u);
  EXPECT_EQ(load_image(a / "reference.png").shape(), (Shape{3, 8, 8}));
  for (const auto& [label, files] : train) {
    for (const std::string& f : files) {
      EXPECT_EQ(load_image(a / "train" / f), load_image(b / "train" / f));
    }
  }
}

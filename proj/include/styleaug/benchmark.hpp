#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "styleaug/tensor.hpp"

namespace styleaug {

/// Seeded synthetic stand-in for the clear-weather / adverse-weather datasets.
///
/// Layout under the output root:
///   train/<class>/NNNN.png         clear-weather glyphs, one folder per class
///   adverse_pool/NNNN.png          target-class glyphs under snow
///   test_adverse/<target>/NNNN.png target-class glyphs under snow (TP set)
///   test_negatives/background/...  snow over empty backgrounds (FP set)
///   reference.png                  snow texture used as the style reference
struct BenchmarkConfig {
  std::size_t images_per_class = 500;
  std::size_t adverse_pool_size = 100;
  std::size_t test_size = 200;
  std::size_t image_size = 16;
  std::string target_class = "vehicle";
  std::vector<std::string> auxiliary_classes{"tower", "flower", "ball"};
  std::uint64_t seed = 0;
  /// Snow strength of the adverse domain, in [0, 1].
  float snow = 0.7f;
};

enum class Glyph { kVehicle, kTower, kFlower, kBall };
Glyph parse_glyph(std::string_view name);

/// One clear-weather image of `glyph` on a random sky/ground background.
Tensor draw_glyph_image(Glyph glyph, std::size_t size, std::uint64_t seed);
/// Background only.
Tensor draw_background(std::size_t size, std::uint64_t seed);
/// Whitening, speckle and wind streaks, strength in [0, 1].
Tensor add_snow(const Tensor& image, float strength, std::uint64_t seed);
/// Snow texture on a pale grey base.
Tensor snow_texture(std::size_t size, std::uint64_t seed);

/// Writes the full benchmark tree. Existing files are overwritten.
void generate_benchmark(const std::filesystem::path& root,
                        const BenchmarkConfig& config);

}  // namespace styleaug

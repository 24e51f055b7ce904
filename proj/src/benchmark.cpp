#include "styleaug/benchmark.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "styleaug/errors.hpp"
#include "styleaug/image.hpp"
#include "styleaug/rng.hpp"

namespace fs = std::filesystem;

namespace styleaug {

namespace {

using Color = std::array<float, 3>;

class Canvas {
 public:
  explicit Canvas(std::size_t size) : img_({3, size, size}), size_(size) {}

  float size() const { return static_cast<float>(size_); }
  Tensor take() && { return std::move(img_); }

  void set(std::size_t y, std::size_t x, const Color& c, float alpha = 1.0f) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      float& v = img_.at(ch, y, x);
      v = (1.0f - alpha) * v + alpha * c[ch];
    }
  }

  // Pixels whose centres fall inside [x0, x1) x [y0, y1).
  void rect(float x0, float y0, float x1, float y1, const Color& c) {
    for (std::size_t y = 0; y < size_; ++y) {
      const float cy = static_cast<float>(y) + 0.5f;
      if (cy < y0 || cy >= y1) continue;
      for (std::size_t x = 0; x < size_; ++x) {
        const float cx = static_cast<float>(x) + 0.5f;
        if (cx >= x0 && cx < x1) set(y, x, c);
      }
    }
  }

  void disc(float cx, float cy, float r, const Color& c) {
    for (std::size_t y = 0; y < size_; ++y) {
      for (std::size_t x = 0; x < size_; ++x) {
        const float dx = static_cast<float>(x) + 0.5f - cx;
        const float dy = static_cast<float>(y) + 0.5f - cy;
        if (dx * dx + dy * dy <= r * r) set(y, x, c);
      }
    }
  }

  void vertical_gradient(const Color& top, const Color& bottom) {
    for (std::size_t y = 0; y < size_; ++y) {
      const float t = size_ > 1 ? static_cast<float>(y) / (size_ - 1) : 0.0f;
      const Color c{top[0] + t * (bottom[0] - top[0]),
                    top[1] + t * (bottom[1] - top[1]),
                    top[2] + t * (bottom[2] - top[2])};
      for (std::size_t x = 0; x < size_; ++x) set(y, x, c);
    }
  }

 private:
  Tensor img_;
  std::size_t size_;
};

Color random_color(Rng& rng, float lo, float hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

// Saturated colour: one dominant channel, the others dimmed.
Color vivid_color(Rng& rng) {
  Color c = random_color(rng, 0.05f, 0.45f);
  c[rng.below(3)] = rng.uniform(0.6f, 0.95f);
  return c;
}

void paint_background(Canvas& canvas, Rng& rng) {
  const Color sky = random_color(rng, 0.35f, 0.8f);
  const Color ground = random_color(rng, 0.1f, 0.5f);
  canvas.vertical_gradient(sky, ground);
}

void paint_vehicle(Canvas& c, Rng& rng) {
  const float s = c.size();
  const float w = rng.uniform(0.5f, 0.75f) * s;
  const float h = rng.uniform(0.18f, 0.26f) * s;
  const float x0 = rng.uniform(0.04f * s, s - w - 0.04f * s);
  const float bottom = rng.uniform(0.62f, 0.8f) * s;
  const Color body = vivid_color(rng);
  const float cabin_w = w * rng.uniform(0.4f, 0.6f);
  const float cabin_x = x0 + rng.uniform(0.1f, 0.9f) * (w - cabin_w);
  c.rect(cabin_x, bottom - h - 0.8f * h, cabin_x + cabin_w, bottom - h, body);
  c.rect(cabin_x + 0.15f * cabin_w, bottom - h - 0.6f * h,
         cabin_x + 0.85f * cabin_w, bottom - h, {0.75f, 0.85f, 0.95f});
  c.rect(x0, bottom - h, x0 + w, bottom, body);
  const float r = 0.1f * s;
  const Color tyre{0.05f, 0.05f, 0.05f};
  c.disc(x0 + 0.22f * w, bottom, r, tyre);
  c.disc(x0 + 0.78f * w, bottom, r, tyre);
}

void paint_tower(Canvas& c, Rng& rng) {
  const float s = c.size();
  const float w = rng.uniform(0.14f, 0.22f) * s;
  const float h = rng.uniform(0.55f, 0.8f) * s;
  const float x0 = rng.uniform(0.1f * s, s - w - 0.1f * s);
  const float bottom = rng.uniform(0.85f, 1.0f) * s;
  const Color col = random_color(rng, 0.1f, 0.6f);
  c.rect(x0, bottom - h, x0 + w, bottom, col);
  const float cap = 0.35f * w;
  c.rect(x0 - cap, bottom - h - 0.1f * s, x0 + w + cap, bottom - h, vivid_color(rng));
}

void paint_flower(Canvas& c, Rng& rng) {
  const float s = c.size();
  const float cx = rng.uniform(0.3f, 0.7f) * s;
  const float cy = rng.uniform(0.25f, 0.5f) * s;
  c.rect(cx - 0.04f * s, cy, cx + 0.04f * s, s, {0.1f, 0.55f, 0.15f});
  const Color petal = vivid_color(rng);
  const float r = rng.uniform(0.09f, 0.13f) * s;
  const float d = 1.3f * r;
  c.disc(cx - d, cy, r, petal);
  c.disc(cx + d, cy, r, petal);
  c.disc(cx, cy - d, r, petal);
  c.disc(cx, cy + d, r, petal);
  c.disc(cx, cy, 0.7f * r, {0.95f, 0.85f, 0.1f});
}

void paint_ball(Canvas& c, Rng& rng) {
  const float s = c.size();
  const float r = rng.uniform(0.17f, 0.3f) * s;
  const float cx = rng.uniform(r, s - r);
  const float cy = rng.uniform(r, s - r);
  const Color col = vivid_color(rng);
  c.disc(cx, cy, r, col);
  c.disc(cx - 0.35f * r, cy - 0.35f * r, 0.3f * r,
         {std::min(1.0f, col[0] + 0.4f), std::min(1.0f, col[1] + 0.4f),
          std::min(1.0f, col[2] + 0.4f)});
}

std::string file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu.png", i);
  return buf;
}

constexpr std::uint64_t kTrainStream = 100;
constexpr std::uint64_t kPoolStream = 200;
constexpr std::uint64_t kTestStream = 300;
constexpr std::uint64_t kNegativeStream = 400;
constexpr std::uint64_t kReferenceStream = 500;
constexpr std::uint64_t kSnowOffset = 0x5eed;

}  // namespace

Glyph parse_glyph(std::string_view name) {
  if (name == "vehicle") return Glyph::kVehicle;
  if (name == "tower") return Glyph::kTower;
  if (name == "flower") return Glyph::kFlower;
  if (name == "ball") return Glyph::kBall;
  throw ConfigError("unknown benchmark class '" + std::string(name) + "'");
}

Tensor draw_background(std::size_t size, std::uint64_t seed) {
  if (size < 4) throw ConfigError("benchmark images need size >= 4");
  Rng rng(seed);
  Canvas canvas(size);
  paint_background(canvas, rng);
  return std::move(canvas).take();
}

Tensor draw_glyph_image(Glyph glyph, std::size_t size, std::uint64_t seed) {
  if (size < 4) throw ConfigError("benchmark images need size >= 4");
  Rng rng(seed);
  Canvas canvas(size);
  paint_background(canvas, rng);
  switch (glyph) {
    case Glyph::kVehicle: paint_vehicle(canvas, rng); break;
    case Glyph::kTower: paint_tower(canvas, rng); break;
    case Glyph::kFlower: paint_flower(canvas, rng); break;
    case Glyph::kBall: paint_ball(canvas, rng); break;
  }
  return std::move(canvas).take();
}

Tensor add_snow(const Tensor& image, float strength, std::uint64_t seed) {
  require_rank(image, 3, "add_snow");
  if (!(strength >= 0.0f && strength <= 1.0f)) {
    throw ConfigError("snow strength must lie in [0, 1]");
  }
  Rng rng(seed);
  Tensor out = image;
  const std::size_t h = image.dim(1), w = image.dim(2);
  const float haze = 0.6f * strength;
  const float white = rng.uniform(0.88f, 1.0f);
  for (float& v : out.data()) v = (1.0f - haze) * v + haze * white;

  auto brighten = [&](std::size_t y, std::size_t x, float alpha) {
    const float level = rng.uniform(0.85f, 1.0f);
    for (std::size_t c = 0; c < image.dim(0); ++c) {
      float& v = out.at(c, y, x);
      v = (1.0f - alpha) * v + alpha * level;
    }
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (rng.uniform() < 0.3f * strength) brighten(y, x, 0.9f);
    }
  }
  const auto streaks = static_cast<std::size_t>(
      std::lround(strength * 3.0f * static_cast<float>(w) / 16.0f)) + 1;
  for (std::size_t k = 0; k < streaks; ++k) {
    float x = rng.uniform(0.0f, static_cast<float>(w));
    const float slope = rng.uniform(-0.8f, -0.3f);
    for (std::size_t y = 0; y < h; ++y, x += slope) {
      const float wrapped = std::fmod(std::fmod(x, static_cast<float>(w)) +
                                          static_cast<float>(w),
                                      static_cast<float>(w));
      brighten(y, static_cast<std::size_t>(wrapped) % w, 0.7f * strength);
    }
  }
  return out;
}

Tensor snow_texture(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const float base = rng.uniform(0.7f, 0.8f);
  return add_snow(Tensor({3, size, size}, base), 1.0f, derive_seed(seed, 1));
}

void generate_benchmark(const fs::path& root, const BenchmarkConfig& config) {
  if (config.images_per_class == 0 || config.test_size == 0) {
    throw ConfigError("benchmark sizes must be >= 1");
  }
  const Glyph target = parse_glyph(config.target_class);
  std::vector<std::string> classes{config.target_class};
  classes.insert(classes.end(), config.auxiliary_classes.begin(),
                 config.auxiliary_classes.end());
  for (const auto& name : config.auxiliary_classes) {
    if (name == config.target_class) {
      throw ConfigError("auxiliary classes must differ from the target class");
    }
  }

  const std::uint64_t train_seed = derive_seed(config.seed, kTrainStream);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const Glyph glyph = parse_glyph(classes[c]);
    const fs::path dir = root / "train" / classes[c];
    fs::create_directories(dir);
    const std::uint64_t class_seed = derive_seed(train_seed, c);
    for (std::size_t i = 0; i < config.images_per_class; ++i) {
      save_image(draw_glyph_image(glyph, config.image_size, derive_seed(class_seed, i)),
                 dir / file_name(i));
    }
  }

  auto snowy_set = [&](const fs::path& dir, std::size_t n, std::uint64_t stream,
                       bool with_glyph) {
    fs::create_directories(dir);
    const std::uint64_t seed = derive_seed(config.seed, stream);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t s = derive_seed(seed, i);
      const Tensor clear = with_glyph
                               ? draw_glyph_image(target, config.image_size, s)
                               : draw_background(config.image_size, s);
      save_image(add_snow(clear, config.snow, s ^ kSnowOffset), dir / file_name(i));
    }
  };
  snowy_set(root / "adverse_pool", config.adverse_pool_size, kPoolStream, true);
  snowy_set(root / "test_adverse" / config.target_class, config.test_size,
            kTestStream, true);
  snowy_set(root / "test_negatives" / "background", config.test_size,
            kNegativeStream, false);

  save_image(snow_texture(config.image_size, derive_seed(config.seed, kReferenceStream)),
             root / "reference.png");
}

}  // namespace styleaug

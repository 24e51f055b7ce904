#include "styleaug/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "styleaug/errors.hpp"

namespace styleaug {

namespace {

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open image " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(file)),
                          std::istreambuf_iterator<char>());
  if (file.bad()) throw IoError("failed reading image " + path.string());

  PngImage png;
  if (bytes.size() < 8 ||
      png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw DecodeError("NotPng", path.string() + " is not a PNG file");
  }
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(),
                                        bytes.size())) {
    throw DecodeError("Corrupt", path.string() + ": " + png.image.message);
  }
  if (png.image.format & PNG_FORMAT_FLAG_LINEAR) {
    throw DecodeError("UnsupportedBitDepth",
                      path.string() + ": 16-bit PNG images are not supported");
  }
  png.image.format = PNG_FORMAT_RGB;
  const std::size_t h = png.image.height, w = png.image.width;
  std::vector<png_byte> rgb(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, rgb.data(), 0, nullptr)) {
    throw DecodeError("Corrupt", path.string() + ": " + png.image.message);
  }

  Tensor out({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.at(c, y, x) = static_cast<float>(rgb[(y * w + x) * 3 + c]) / 255.0f;
  return out;
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  require_rank(image, 3, "save_image");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (channels != 1 && channels != 3) {
    throw ShapeMismatch("save_image expects 1 or 3 channels, got " +
                        std::to_string(channels));
  }
  std::vector<png_byte> pixels(channels * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        pixels[(y * w + x) * channels + c] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
    }
  }
  PngImage png;
  png.image.width = static_cast<png_uint_32>(w);
  png.image.height = static_cast<png_uint_32>(h);
  png.image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, pixels.data(), 0,
                               nullptr)) {
    throw IoError("cannot write image " + path.string() + ": " +
                  png.image.message);
  }
}

Tensor resize_bilinear(const Tensor& image, std::size_t height,
                       std::size_t width) {
  require_rank(image, 3, "resize_bilinear");
  if (height == 0 || width == 0) {
    throw ShapeMismatch("resize_bilinear: target extent must be positive");
  }
  const std::size_t channels = image.dim(0), in_h = image.dim(1),
                    in_w = image.dim(2);
  if (in_h == height && in_w == width) return image;

  auto axis = [](std::size_t out_i, std::size_t out_n, std::size_t in_n,
                 std::size_t& lo, std::size_t& hi, float& frac) {
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    double src = (static_cast<double>(out_i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    lo = static_cast<std::size_t>(std::floor(src));
    hi = std::min(lo + 1, in_n - 1);
    frac = static_cast<float>(src - static_cast<double>(lo));
  };

  Tensor out({channels, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    float fy;
    axis(y, height, in_h, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      float fx;
      axis(x, width, in_w, x0, x1, fx);
      for (std::size_t c = 0; c < channels; ++c) {
        const float top =
            image.at(c, y0, x0) * (1 - fx) + image.at(c, y0, x1) * fx;
        const float bottom =
            image.at(c, y1, x0) * (1 - fx) + image.at(c, y1, x1) * fx;
        out.at(c, y, x) = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Tensor traditional_augment(const Tensor& image, GeometricOp op) {
  require_rank(image, 3, "traditional_augment");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  const bool transpose = op == GeometricOp::kRot90 || op == GeometricOp::kRot270;
  const std::size_t out_h = transpose ? w : h;
  const std::size_t out_w = transpose ? h : w;
  Tensor out({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t x = 0; x < out_w; ++x) {
        std::size_t sy = y, sx = x;
        switch (op) {
          case GeometricOp::kRot90:
            sy = x;
            sx = w - 1 - y;
            break;
          case GeometricOp::kRot180:
            sy = h - 1 - y;
            sx = w - 1 - x;
            break;
          case GeometricOp::kRot270:
            sy = h - 1 - x;
            sx = y;
            break;
          case GeometricOp::kFlipH:
            sx = w - 1 - x;
            break;
          case GeometricOp::kFlipV:
            sy = h - 1 - y;
            break;
        }
        out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  }
  return out;
}

GeometricOp parse_geometric_op(std::string_view name) {
  if (name == "rot90") return GeometricOp::kRot90;
  if (name == "rot180") return GeometricOp::kRot180;
  if (name == "rot270") return GeometricOp::kRot270;
  if (name == "flip-h") return GeometricOp::kFlipH;
  if (name == "flip-v") return GeometricOp::kFlipV;
  throw ConfigError("unknown augmentation op '" + std::string(name) + "'");
}

std::string_view geometric_op_name(GeometricOp op) {
  switch (op) {
    case GeometricOp::kRot90: return "rot90";
    case GeometricOp::kRot180: return "rot180";
    case GeometricOp::kRot270: return "rot270";
    case GeometricOp::kFlipH: return "flip-h";
    case GeometricOp::kFlipV: return "flip-v";
  }
  return "?";
}

}  // namespace styleaug

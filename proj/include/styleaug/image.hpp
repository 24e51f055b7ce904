#pragma once

#include <filesystem>
#include <string_view>

#include "styleaug/tensor.hpp"

namespace styleaug {

/// Decodes an 8-bit PNG into a [3, H, W] tensor with values in [0, 1].
/// Grayscale is replicated to three channels, palettes are expanded and alpha
/// is dropped. 16-bit images raise DecodeError("UnsupportedBitDepth").
Tensor load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Values are clamped to [0, 1] and rounded to the
/// nearest of 256 levels. Accepts [1, H, W] or [3, H, W].
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centres; an identity when the size is
/// unchanged.
Tensor resize_bilinear(const Tensor& image, std::size_t height,
                       std::size_t width);

enum class GeometricOp { kRot90, kRot180, kRot270, kFlipH, kFlipV };

/// Exact dihedral transform. rot90 turns counter-clockwise; flip-h mirrors
/// left/right.
Tensor traditional_augment(const Tensor& image, GeometricOp op);

GeometricOp parse_geometric_op(std::string_view name);
std::string_view geometric_op_name(GeometricOp op);

}  // namespace styleaug

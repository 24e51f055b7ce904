#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "styleaug/tensor.hpp"

namespace styleaug {

/// Portable little-endian weight container ("STWB", version 1).
///
///   "STWB" | u32 version | u32 entry count
///   per entry: u32 name length | UTF-8 name | u8 rank | u64 dims[rank] |
///              f32 data
///   u32 metadata length | UTF-8 JSON {"means": [...], "scales": [...], ...}
///
/// Parameterized layers store two entries, "<tag>.weight" and "<tag>.bias".
/// Entry order and the metadata text are preserved verbatim, so a load/save
/// cycle reproduces the input file byte for byte.
class WeightStore {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::string_view kMagic = "STWB";

  struct Entry {
    std::string name;
    Tensor tensor;
    bool operator==(const Entry&) const = default;
  };

  WeightStore();

  static WeightStore load(const std::filesystem::path& path);
  static WeightStore parse(std::string_view bytes);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Tensor* find(std::string_view name) const;
  /// Replaces an existing entry in place or appends a new one.
  void put(std::string name, Tensor tensor);

  static std::string weight_name(std::string_view tag);
  static std::string bias_name(std::string_view tag);

  const std::vector<float>& means() const noexcept { return means_; }
  const std::vector<float>& scales() const noexcept { return scales_; }
  const std::string& metadata_json() const noexcept { return metadata_; }
  /// Replaces the metadata text; must be a JSON object. Means and scales are
  /// re-read from it.
  void set_metadata_json(std::string json);
  void set_preprocess(std::vector<float> means, std::vector<float> scales);

  bool operator==(const WeightStore&) const = default;

 private:
  std::vector<Entry> entries_;
  std::string metadata_;
  std::vector<float> means_;
  std::vector<float> scales_;
};

}  // namespace styleaug

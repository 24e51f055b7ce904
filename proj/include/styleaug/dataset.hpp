#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "styleaug/network.hpp"
#include "styleaug/transfer.hpp"

namespace styleaug {

enum class Origin { kOriginal, kStyled, kAdverseReal };

std::string_view origin_name(Origin origin);
Origin parse_origin(std::string_view name);

struct ManifestEntry {
  std::string path;    // relative to the manifest directory
  std::string label;   // class name
  Origin origin = Origin::kOriginal;
  std::string source;  // relative to the source (or adverse pool) root
  std::optional<std::uint64_t> seed;  // synthesis seed, styled entries only
  bool operator==(const ManifestEntry&) const = default;
};

/// A source image that could not be turned into an entry.
struct ManifestGap {
  std::string source;
  std::string reason;
  bool operator==(const ManifestGap&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<ManifestGap> gaps;
  std::string target_class;
  double ratio = 0.0;
  std::uint64_t master_seed = 0;
  std::string config_digest;
  std::size_t image_size = 0;  // synthesis resolution
  std::string source_root;
  std::string adverse_root;

  /// Directory that entry paths are relative to. Not serialized.
  std::filesystem::path root;

  std::size_t count(std::string_view label, Origin origin) const;
  std::vector<std::string> labels() const;  // sorted, unique

  std::string to_json() const;
  static DatasetManifest from_json(std::string_view text,
                                   std::filesystem::path root);
  void save(const std::filesystem::path& file) const;
  static DatasetManifest load(const std::filesystem::path& file);

  bool operator==(const DatasetManifest& other) const {
    return to_json() == other.to_json();
  }
};

/// Images of a labelled folder tree: `<root>/<class>/<file>.png`, sorted by
/// class, then file name. Paths are relative to root.
std::map<std::string, std::vector<std::string>> list_labelled_images(
    const std::filesystem::path& root);

/// PNG files directly inside `dir`, sorted by name (relative file names).
std::vector<std::string> list_images(const std::filesystem::path& dir);

struct AugmentationPlan {
  std::filesystem::path source_root;
  std::string target_class;
  std::filesystem::path reference;
  double ratio = 0.2;
  TransferConfig transfer;
  std::filesystem::path output_root;
  std::uint64_t seed = 0;
  std::size_t image_size = 16;
  /// Switches build_real_composite's replacement source.
  std::optional<std::filesystem::path> adverse_pool;
  /// STWB file for the extractor; random seeded weights when absent.
  std::optional<std::filesystem::path> weights;
  std::size_t threads = 0;

  void validate() const;
};

/// floor(ratio * n), robust to binary rounding of ratio.
std::size_t replaced_count(double ratio, std::size_t n);

/// Indices [0, n) in seeded Fisher-Yates order; the first replaced_count()
/// are the ones replaced.
std::vector<std::size_t> selection_order(std::size_t n, std::uint64_t seed);

/// Extractor used for synthesis: the plan's weight file, or the desk-scale
/// spec with weights drawn from transfer.network_seed.
Network synthesis_network(const AugmentationPlan& plan);

/// Hex FNV-1a digest of the canonical TransferConfig JSON.
std::string config_digest(const TransferConfig& config);

/// Replaces floor(ratio * N) seeded-selected target images with style
/// transferred composites, copies everything else byte for byte and writes
/// `<output_root>/manifest.json`.
DatasetManifest build_composite(const AugmentationPlan& plan);

/// As build_composite, but replacements are drawn without replacement from
/// the plan's adverse pool. Throws InsufficientPool.
DatasetManifest build_real_composite(const AugmentationPlan& plan);

/// One composite per iteration count, from a single synthesis run that
/// snapshots every requested count. Composite k lands in
/// `<output_root>/iter_<k>` and equals build_composite with iterations = k.
std::map<std::size_t, DatasetManifest> build_composite_per_iteration(
    const AugmentationPlan& plan, const std::vector<std::size_t>& iterations);

}  // namespace styleaug

#include "styleaug/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "styleaug/errors.hpp"
#include "styleaug/image.hpp"
#include "styleaug/parallel.hpp"
#include "styleaug/rng.hpp"
#include "styleaug/serialization.hpp"

namespace fs = std::filesystem;

namespace styleaug {

using nlohmann::json;

namespace {

// Stream ids for derive_seed so selections and syntheses never share streams.
constexpr std::uint64_t kSelectionStream = 0x73656c656374ULL;
constexpr std::uint64_t kPoolStream = 0x706f6f6cULL;
constexpr std::uint64_t kSynthesisStream = 0x73796e7468ULL;

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

void copy_bytes(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::create_directories(to.parent_path(), ec);
  fs::copy_file(from, to, fs::copy_options::overwrite_existing, ec);
  if (ec) {
    throw IoError("cannot copy " + from.string() + " to " + to.string() + ": " +
                  ec.message());
  }
}

std::string stem_png(const std::string& rel, const char* prefix) {
  return std::string(prefix) + fs::path(rel).stem().string() + ".png";
}

// A planned replacement for one selected target image.
struct Replacement {
  std::string source;      // relative to the source root (or pool)
  std::string out_path;    // relative to the output root
  Origin origin = Origin::kStyled;
  std::optional<std::uint64_t> seed;
  std::optional<Tensor> image;   // write this, or
  std::optional<fs::path> copy;  // copy this file
  std::string error;
};

DatasetManifest assemble(const AugmentationPlan& plan,
                         const std::map<std::string, std::vector<std::string>>& listing,
                         const std::set<std::string>& replaced_sources,
                         std::vector<Replacement>& replacements,
                         const fs::path& output_root) {
  DatasetManifest manifest;
  manifest.target_class = plan.target_class;
  manifest.ratio = plan.ratio;
  manifest.master_seed = plan.seed;
  manifest.image_size = plan.image_size;
  manifest.source_root = plan.source_root.generic_string();
  if (plan.adverse_pool) manifest.adverse_root = plan.adverse_pool->generic_string();
  manifest.root = output_root;

  std::set<std::string> used_paths;
  auto claim = [&](const std::string& path) {
    if (!used_paths.insert(path).second) {
      throw IoError("composite path collision at '" + path + "'");
    }
  };

  for (const auto& [label, files] : listing) {
    for (const std::string& rel : files) {
      if (replaced_sources.contains(rel)) continue;
      claim(rel);
      copy_bytes(plan.source_root / rel, output_root / rel);
      manifest.entries.push_back({rel, label, Origin::kOriginal, rel, std::nullopt});
    }
  }
  for (Replacement& r : replacements) {
    if (!r.error.empty()) {
      manifest.gaps.push_back({r.source, r.error});
      continue;
    }
    claim(r.out_path);
    if (r.image) {
      save_image(*r.image, output_root / r.out_path);
    } else {
      copy_bytes(*r.copy, output_root / r.out_path);
    }
    manifest.entries.push_back(
        {r.out_path, plan.target_class, r.origin, r.source, r.seed});
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.path < b.path;
            });
  std::sort(manifest.gaps.begin(), manifest.gaps.end(),
            [](const ManifestGap& a, const ManifestGap& b) {
              return a.source < b.source;
            });
  return manifest;
}

std::vector<std::string> selected_sources(const std::vector<std::string>& files,
                                          double ratio, std::uint64_t seed) {
  const auto order = selection_order(files.size(), derive_seed(seed, kSelectionStream));
  const std::size_t k = replaced_count(ratio, files.size());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(files[order[i]]);
  return out;
}

// Loads the selected sources at synthesis resolution; failures become
// replacement errors.
std::vector<Replacement> load_for_synthesis(const AugmentationPlan& plan,
                                            const std::vector<std::string>& selected,
                                            std::vector<Tensor>& images,
                                            std::vector<std::size_t>& slot) {
  std::vector<Replacement> reps;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    Replacement r;
    r.source = selected[i];
    r.out_path = (fs::path(plan.target_class) / stem_png(selected[i], "styled_"))
                     .generic_string();
    r.seed = derive_seed(derive_seed(plan.seed, kSynthesisStream), i);
    try {
      images.push_back(resize_bilinear(load_image(plan.source_root / selected[i]),
                                       plan.image_size, plan.image_size));
      slot.push_back(i);
    } catch (const DecodeError& e) {
      r.error = "DecodeError(" + e.reason() + "): " + e.what();
    }
    reps.push_back(std::move(r));
  }
  return reps;
}

// Unchecked optimizer runs with the seeds recorded in `reps`, so results do
// not depend on which other items failed to decode. Progress is checked by
// the caller.
struct SynthesisItem {
  std::optional<TransferResult> result;
  std::string error;
};

std::vector<SynthesisItem> synthesize_items(const Network& net,
                                            const std::vector<Tensor>& images,
                                            const std::vector<std::size_t>& slot,
                                            const std::vector<Replacement>& reps,
                                            const Tensor& reference,
                                            const TransferConfig& config,
                                            std::size_t threads) {
  std::vector<SynthesisItem> items(images.size());
  parallel_for(images.size(), threads, [&](std::size_t k) {
    TransferConfig cfg = config;
    cfg.seed = *reps[slot[k]].seed;
    try {
      items[k].result = optimize_image(
          net, prepare_targets(net, images[k], reference, cfg), cfg);
    } catch (const StepSizeError& e) {
      items[k].error = std::string("StepSizeError: ") + e.what();
    } catch (const Error& e) {
      items[k].error = std::string("Error: ") + e.what();
    }
  });
  return items;
}

// Fills replacement images from the snapshot (or final image) after `steps`
// optimizer steps, turning failed progress checks into gaps.
void apply_results(std::vector<Replacement>& reps,
                   const std::vector<std::size_t>& slot,
                   const std::vector<SynthesisItem>& items,
                   std::optional<std::size_t> snapshot, std::size_t steps) {
  for (std::size_t k = 0; k < items.size(); ++k) {
    Replacement& r = reps[slot[k]];
    if (!items[k].result) {
      r.error = items[k].error;
      continue;
    }
    try {
      check_progress(*items[k].result, steps);
    } catch (const StepSizeError& e) {
      r.error = std::string("StepSizeError: ") + e.what();
      continue;
    }
    r.image = snapshot ? items[k].result->snapshots.at(*snapshot)
                       : items[k].result->image;
  }
}

Tensor load_reference(const AugmentationPlan& plan) {
  return resize_bilinear(load_image(plan.reference), plan.image_size,
                         plan.image_size);
}

std::map<std::string, std::vector<std::string>> checked_listing(
    const AugmentationPlan& plan) {
  plan.validate();
  auto listing = list_labelled_images(plan.source_root);
  auto it = listing.find(plan.target_class);
  if (it == listing.end() || it->second.empty()) {
    throw IoError("target class '" + plan.target_class + "' has no images under " +
                  plan.source_root.string());
  }
  return listing;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view origin_name(Origin origin) {
  switch (origin) {
    case Origin::kOriginal: return "original";
    case Origin::kStyled: return "styled";
    case Origin::kAdverseReal: return "adverse-real";
  }
  return "?";
}

Origin parse_origin(std::string_view name) {
  if (name == "original") return Origin::kOriginal;
  if (name == "styled") return Origin::kStyled;
  if (name == "adverse-real") return Origin::kAdverseReal;
  throw FormatError("unknown origin '" + std::string(name) + "'");
}

std::size_t DatasetManifest::count(std::string_view label, Origin origin) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) {
        return e.label == label && e.origin == origin;
      }));
}

std::vector<std::string> DatasetManifest::labels() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.label);
  return {s.begin(), s.end()};
}

std::string DatasetManifest::to_json() const {
  json entries_j = json::array();
  for (const auto& e : entries) {
    entries_j.push_back({{"path", e.path},
                         {"label", e.label},
                         {"origin", origin_name(e.origin)},
                         {"source", e.source},
                         {"seed", e.seed ? json(*e.seed) : json(nullptr)}});
  }
  json gaps_j = json::array();
  for (const auto& g : gaps) gaps_j.push_back({{"source", g.source}, {"reason", g.reason}});
  json j{{"entries", entries_j},
         {"gaps", gaps_j},
         {"target_class", target_class},
         {"ratio", ratio},
         {"master_seed", master_seed},
         {"config_digest", config_digest},
         {"image_size", image_size},
         {"source_root", source_root},
         {"adverse_root", adverse_root}};
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(std::string_view text, fs::path root) {
  DatasetManifest m;
  m.root = std::move(root);
  try {
    const json j = json::parse(text);
    for (const json& e : j.at("entries")) {
      ManifestEntry entry;
      entry.path = e.at("path").get<std::string>();
      entry.label = e.at("label").get<std::string>();
      entry.origin = parse_origin(e.at("origin").get<std::string>());
      entry.source = e.at("source").get<std::string>();
      if (!e.at("seed").is_null()) entry.seed = e.at("seed").get<std::uint64_t>();
      m.entries.push_back(std::move(entry));
    }
    if (j.contains("gaps")) {
      for (const json& g : j.at("gaps")) {
        m.gaps.push_back({g.at("source").get<std::string>(),
                          g.at("reason").get<std::string>()});
      }
    }
    m.target_class = j.value("target_class", "");
    m.ratio = j.value("ratio", 0.0);
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    m.config_digest = j.value("config_digest", "");
    m.image_size = j.value("image_size", std::size_t{0});
    m.source_root = j.value("source_root", "");
    m.adverse_root = j.value("adverse_root", "");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void DatasetManifest::save(const fs::path& file) const {
  write_text_file(file, to_json());
}

DatasetManifest DatasetManifest::load(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str(), file.parent_path());
}

std::map<std::string, std::vector<std::string>> list_labelled_images(
    const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw IoError("dataset root " + root.string() + " is not a directory");
  }
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& cls : fs::directory_iterator(root)) {
    if (!cls.is_directory()) continue;
    const std::string label = cls.path().filename().string();
    auto& files = out[label];
    for (const std::string& name : list_images(cls.path())) {
      files.push_back((fs::path(label) / name).generic_string());
    }
  }
  return out;
}

std::vector<std::string> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw IoError(dir.string() + " is not a directory");
  }
  std::vector<std::string> out;
  for (const auto& f : fs::directory_iterator(dir)) {
    if (f.is_regular_file() && is_png(f.path())) {
      out.push_back(f.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void AugmentationPlan::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ConfigError("ratio must lie in [0, 1], got " + std::to_string(ratio));
  }
  if (target_class.empty()) throw ConfigError("target class is empty");
  if (image_size < 4) throw ConfigError("image_size must be >= 4");
  std::error_code ec;
  if (!fs::is_directory(source_root / target_class, ec)) {
    throw IoError("source root " + source_root.string() +
                  " has no class directory '" + target_class + "'");
  }
  if (output_root.empty()) throw ConfigError("output root is empty");
  transfer.validate();
}

std::size_t replaced_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> selection_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

Network synthesis_network(const AugmentationPlan& plan) {
  const NetworkSpec spec = NetworkSpec::desk_default();
  if (plan.weights) return Network::bind(spec, WeightStore::load(*plan.weights));
  return Network::bind(
      spec, Network::random_weights(spec, plan.transfer.network_seed, plan.image_size));
}

std::string config_digest(const TransferConfig& config) {
  const std::string text = transfer_config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DatasetManifest build_composite(const AugmentationPlan& plan) {
  const auto listing = checked_listing(plan);
  const auto selected =
      selected_sources(listing.at(plan.target_class), plan.ratio, plan.seed);

  std::vector<Tensor> images;
  std::vector<std::size_t> slot;
  std::vector<Replacement> reps = load_for_synthesis(plan, selected, images, slot);
  if (!images.empty()) {
    const Network net = synthesis_network(plan);
    const auto items = synthesize_items(net, images, slot, reps,
                                        load_reference(plan), plan.transfer,
                                        plan.threads);
    apply_results(reps, slot, items, std::nullopt,
                  plan.transfer.iterations * plan.transfer.steps_per_iteration);
  }
  const std::set<std::string> replaced(selected.begin(), selected.end());
  DatasetManifest manifest =
      assemble(plan, listing, replaced, reps, plan.output_root);
  manifest.config_digest = config_digest(plan.transfer);
  manifest.save(plan.output_root / "manifest.json");
  return manifest;
}

DatasetManifest build_real_composite(const AugmentationPlan& plan) {
  if (!plan.adverse_pool) throw ConfigError("plan has no adverse pool directory");
  const auto listing = checked_listing(plan);
  const auto selected =
      selected_sources(listing.at(plan.target_class), plan.ratio, plan.seed);
  const std::vector<std::string> pool = list_images(*plan.adverse_pool);
  if (pool.size() < selected.size()) {
    throw InsufficientPool("adverse pool holds " + std::to_string(pool.size()) +
                           " images, " + std::to_string(selected.size()) +
                           " are needed");
  }
  const auto order = selection_order(pool.size(), derive_seed(plan.seed, kPoolStream));
  std::vector<Replacement> reps;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const std::string& name = pool[order[i]];
    Replacement r;
    r.source = name;
    r.out_path =
        (fs::path(plan.target_class) / stem_png(name, "adverse_")).generic_string();
    r.origin = Origin::kAdverseReal;
    r.copy = *plan.adverse_pool / name;
    reps.push_back(std::move(r));
  }
  const std::set<std::string> replaced(selected.begin(), selected.end());
  DatasetManifest manifest =
      assemble(plan, listing, replaced, reps, plan.output_root);
  manifest.save(plan.output_root / "manifest.json");
  return manifest;
}

std::map<std::size_t, DatasetManifest> build_composite_per_iteration(
    const AugmentationPlan& plan, const std::vector<std::size_t>& iterations) {
  if (iterations.empty()) throw ConfigError("iteration list is empty");
  const std::set<std::size_t> wanted(iterations.begin(), iterations.end());
  if (*wanted.begin() < 1) throw ConfigError("iteration counts must be >= 1");

  // One run to the largest count; snapshots are non-invasive, so snapshot k
  // equals the final image of a k-iteration run.
  AugmentationPlan longest = plan;
  longest.transfer.iterations = *wanted.rbegin();
  longest.transfer.snapshot_iterations = wanted;
  const auto listing = checked_listing(longest);
  const auto selected =
      selected_sources(listing.at(plan.target_class), plan.ratio, plan.seed);

  std::vector<Tensor> images;
  std::vector<std::size_t> slot;
  const std::vector<Replacement> base =
      load_for_synthesis(plan, selected, images, slot);
  std::vector<SynthesisItem> items;
  if (!images.empty()) {
    const Network net = synthesis_network(plan);
    items = synthesize_items(net, images, slot, base, load_reference(plan),
                             longest.transfer, plan.threads);
  }

  const std::set<std::string> replaced(selected.begin(), selected.end());
  std::map<std::size_t, DatasetManifest> out;
  for (std::size_t k : wanted) {
    AugmentationPlan row = plan;
    row.transfer.iterations = k;
    row.transfer.snapshot_iterations.clear();
    row.output_root = plan.output_root / ("iter_" + std::to_string(k));
    std::vector<Replacement> reps = base;
    apply_results(reps, slot, items, k, k * plan.transfer.steps_per_iteration);
    DatasetManifest manifest =
        assemble(row, listing, replaced, reps, row.output_root);
    manifest.config_digest = config_digest(row.transfer);
    manifest.save(row.output_root / "manifest.json");
    out.emplace(k, std::move(manifest));
  }
  return out;
}

}  // namespace styleaug

#include "styleaug/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "styleaug/errors.hpp"

namespace styleaug {

static_assert(std::endian::native == std::endian::little,
              "STWB reader assumes a little-endian host");

namespace {

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("STWB truncated while reading " + std::string(what) +
                        " at offset " + std::to_string(pos_));
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T scalar(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what).data(), sizeof(T));
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void append(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void parse_preprocess(const std::string& text, std::vector<float>& means,
                      std::vector<float>& scales) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("STWB metadata is not valid JSON: ") +
                      e.what());
  }
  if (!meta.is_object()) throw FormatError("STWB metadata must be an object");
  means.clear();
  scales.clear();
  try {
    if (meta.contains("means")) means = meta.at("means").get<std::vector<float>>();
    if (meta.contains("scales"))
      scales = meta.at("scales").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("STWB metadata means/scales: ") + e.what());
  }
  if (means.size() != scales.size()) {
    throw FormatError("STWB metadata has " + std::to_string(means.size()) +
                      " means but " + std::to_string(scales.size()) +
                      " scales");
  }
  for (float s : scales) {
    if (s == 0.0f) throw FormatError("STWB metadata scale must be non-zero");
  }
}

}  // namespace

WeightStore::WeightStore() { set_preprocess({}, {}); }

WeightStore WeightStore::parse(std::string_view bytes) {
  Reader in(bytes);
  if (in.remaining() < 4 || in.take(4, "magic") != kMagic) {
    throw FormatError("not an STWB file (bad magic)");
  }
  const auto version = in.scalar<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported STWB version " + std::to_string(version) +
                      " (expected " + std::to_string(kVersion) + ")");
  }
  const auto count = in.scalar<std::uint32_t>("entry count");
  WeightStore store;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = in.scalar<std::uint32_t>("entry name length");
    std::string name(in.take(name_len, "entry name"));
    if (name.empty()) throw FormatError("STWB entry with empty name");
    const auto rank = in.scalar<std::uint8_t>("rank");
    if (rank == 0) throw FormatError("STWB entry '" + name + "' has rank 0");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      const auto dim = in.scalar<std::uint64_t>("dims");
      if (dim == 0 || dim > (std::uint64_t{1} << 40)) {
        throw FormatError("STWB entry '" + name + "' has invalid extent");
      }
      d = static_cast<std::size_t>(dim);
      n *= d;
      if (n > (std::size_t{1} << 40)) {
        throw FormatError("STWB entry '" + name + "' is implausibly large");
      }
    }
    std::string_view raw = in.take(n * sizeof(float), "tensor data");
    std::vector<float> data(n);
    std::memcpy(data.data(), raw.data(), raw.size());
    if (store.find(name)) {
      throw FormatError("STWB duplicate entry '" + name + "'");
    }
    store.entries_.push_back({std::move(name), Tensor(shape, std::move(data))});
  }
  const auto meta_len = in.scalar<std::uint32_t>("metadata length");
  std::string meta(in.take(meta_len, "metadata"));
  if (!in.done()) {
    throw FormatError("STWB has " + std::to_string(in.remaining()) +
                      " trailing bytes");
  }
  store.set_metadata_json(std::move(meta));
  return store;
}

WeightStore WeightStore::load(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open weight file " + path.string());
  std::ostringstream buf;
  buf << file.rdbuf();
  if (file.bad()) throw IoError("failed reading weight file " + path.string());
  return parse(buf.str());
}

std::string WeightStore::serialize() const {
  std::string out(kMagic);
  append<std::uint32_t>(out, kVersion);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    append<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    append<std::uint8_t>(out, static_cast<std::uint8_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) {
      append<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    }
    out.append(reinterpret_cast<const char*>(e.tensor.data().data()),
               e.tensor.size() * sizeof(float));
  }
  append<std::uint32_t>(out, static_cast<std::uint32_t>(metadata_.size()));
  out += metadata_;
  return out;
}

void WeightStore::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot create weight file " + path.string());
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError("failed writing weight file " + path.string());
}

const Tensor* WeightStore::find(std::string_view name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

void WeightStore::put(std::string name, Tensor tensor) {
  for (Entry& e : entries_) {
    if (e.name == name) {
      e.tensor = std::move(tensor);
      return;
    }
  }
  entries_.push_back({std::move(name), std::move(tensor)});
}

std::string WeightStore::weight_name(std::string_view tag) {
  return std::string(tag) + ".weight";
}

std::string WeightStore::bias_name(std::string_view tag) {
  return std::string(tag) + ".bias";
}

void WeightStore::set_metadata_json(std::string json) {
  std::vector<float> means, scales;
  parse_preprocess(json, means, scales);
  metadata_ = std::move(json);
  means_ = std::move(means);
  scales_ = std::move(scales);
}

void WeightStore::set_preprocess(std::vector<float> means,
                                 std::vector<float> scales) {
  nlohmann::json meta = metadata_.empty() ? nlohmann::json::object()
                                          : nlohmann::json::parse(metadata_);
  meta["means"] = means;
  meta["scales"] = scales;
  set_metadata_json(meta.dump());
}

}  // namespace styleaug

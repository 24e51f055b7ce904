#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "styleaug/classifier.hpp"
#include "styleaug/network.hpp"
#include "styleaug/transfer.hpp"

namespace styleaug {

// JSON mirrors of the configuration types. Readers accept partial objects
// (missing keys keep their defaults) and reject unknown keys with ConfigError.

nlohmann::json transfer_config_to_json(const TransferConfig& config);
TransferConfig transfer_config_from_json(const nlohmann::json& j);

nlohmann::json network_spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Parses a JSON file; IoError / ConfigError on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace styleaug

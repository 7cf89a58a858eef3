#pragma once

#include <json.hpp>

#include "vamae/model.hpp"

namespace vamae {

nlohmann::json to_json(const ModelConfig& cfg);
/// Throws std::invalid_argument naming the offending field.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace vamae

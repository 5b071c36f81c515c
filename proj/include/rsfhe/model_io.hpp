#pragma once

// JSON model files; schema in docs/formats.md.

#include "rsfhe/network.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace rsfhe {

nlohmann::json model_to_json(const ModelSpec& model);
/// Throws ValidationError (with the offending field) or DimensionError.
ModelSpec model_from_json(const nlohmann::json& j);

ModelSpec load_model(const std::filesystem::path& path);
void save_model(const ModelSpec& model, const std::filesystem::path& path);

}  // namespace rsfhe

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "psim/tensor.hpp"

namespace psim {

inline constexpr std::string_view kCheckpointFormat = "psimgnn-checkpoint/1";

/// JSON document
/// `{"format": ..., "meta": {...}, "parameters": {name: {"shape": [r, c], "values": [...]}}}`
/// with row-major values. `meta_json` must be a JSON object (or empty).
std::string checkpoint_to_json(const ParameterSet& params, std::string_view meta_json = {});

/// Loads values into `params` by name; every parameter must be present with
/// the same shape. Returns the serialized "meta" object.
std::string load_checkpoint_json(ParameterSet& params, std::string_view json_text);

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path,
                     std::string_view meta_json = {});
std::string load_checkpoint(ParameterSet& params, const std::filesystem::path& path);

/// The "meta" object of a checkpoint file without touching any parameters.
std::string read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace psim

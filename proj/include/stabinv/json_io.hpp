#pragma once

#include <nlohmann/json.hpp>

#include "stabinv/dataset.hpp"
#include "stabinv/geometry.hpp"
#include "stabinv/kernel.hpp"

// JSON mappings for configuration structs. Readers accept partial objects and
// keep defaults for missing keys; unknown keys are rejected.
namespace stabinv {

void to_json(nlohmann::ordered_json& j, const Interval& iv);
void from_json(const nlohmann::ordered_json& j, Interval& iv);
void to_json(nlohmann::ordered_json& j, const ParamBox& box);
void from_json(const nlohmann::ordered_json& j, ParamBox& box);
void to_json(nlohmann::ordered_json& j, const SourceRegion& region);
void from_json(const nlohmann::ordered_json& j, SourceRegion& region);
void to_json(nlohmann::ordered_json& j, const KernelConfig& cfg);
void from_json(const nlohmann::ordered_json& j, KernelConfig& cfg);
void to_json(nlohmann::ordered_json& j, const DatasetMeta& meta);
void from_json(const nlohmann::ordered_json& j, DatasetMeta& meta);

}  // namespace stabinv

#include "stabinv/json_io.hpp"

#include <initializer_list>
#include <string>

#include "stabinv/errors.hpp"

namespace stabinv {

using nlohmann::ordered_json;

namespace {

void reject_unknown(const ordered_json& j, std::initializer_list<const char*> keys, const char* what)
{
    if (!j.is_object()) throw ConfigError(std::string(what) + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : keys) known = known || key == k;
        if (!known) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const ordered_json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(ordered_json& j, const Interval& iv)
{
    j = ordered_json::array({iv.lo, iv.hi});
}

void from_json(const ordered_json& j, Interval& iv)
{
    if (!j.is_array() || j.size() != 2) throw ConfigError("interval: expected [lo, hi]");
    iv = {j[0].get<double>(), j[1].get<double>()};
}

void to_json(ordered_json& j, const ParamBox& box)
{
    j = {{"a", box.a}, {"b", box.b}, {"d", box.d}};
}

void from_json(const ordered_json& j, ParamBox& box)
{
    reject_unknown(j, {"a", "b", "d"}, "box");
    read(j, "a", box.a);
    read(j, "b", box.b);
    read(j, "d", box.d);
}

void to_json(ordered_json& j, const SourceRegion& region)
{
    j = {{"half_width", region.half_width}, {"cells_per_axis", region.cells_per_axis}, {"order", region.order}};
}

void from_json(const ordered_json& j, SourceRegion& region)
{
    reject_unknown(j, {"half_width", "cells_per_axis", "order"}, "source");
    read(j, "half_width", region.half_width);
    read(j, "cells_per_axis", region.cells_per_axis);
    read(j, "order", region.order);
}

void to_json(ordered_json& j, const KernelConfig& cfg)
{
    j = {{"kind", "laplace-halfspace"}, {"cutoff_enabled", cfg.cutoff_enabled}, {"d0", cfg.d0}};
}

void from_json(const ordered_json& j, KernelConfig& cfg)
{
    reject_unknown(j, {"kind", "cutoff_enabled", "d0"}, "kernel");
    if (j.contains("kind") && j.at("kind").get<std::string>() != "laplace-halfspace")
        throw ConfigError("kernel.kind: only 'laplace-halfspace' is available");
    read(j, "cutoff_enabled", cfg.cutoff_enabled);
    read(j, "d0", cfg.d0);
}

void to_json(ordered_json& j, const DatasetMeta& meta)
{
    j = {{"format_version", meta.format_version},
         {"seed", meta.seed},
         {"count", meta.count},
         {"first_index", meta.first_index},
         {"q", meta.q},
         {"grid_n", meta.grid_n},
         {"grid_half_width", meta.grid_half_width},
         {"modes_per_axis", meta.modes_per_axis},
         {"source", meta.region},
         {"kernel", meta.kernel},
         {"box", meta.box},
         {"noise_level", meta.noise_level},
         {"columns", meta.feature_dim()}};
}

void from_json(const ordered_json& j, DatasetMeta& meta)
{
    reject_unknown(j,
                   {"format_version", "seed", "count", "first_index", "q", "grid_n", "grid_half_width",
                    "modes_per_axis", "source", "kernel", "box", "noise_level", "columns"},
                   "dataset metadata");
    read(j, "format_version", meta.format_version);
    read(j, "seed", meta.seed);
    read(j, "count", meta.count);
    read(j, "first_index", meta.first_index);
    read(j, "q", meta.q);
    read(j, "grid_n", meta.grid_n);
    read(j, "grid_half_width", meta.grid_half_width);
    read(j, "modes_per_axis", meta.modes_per_axis);
    read(j, "source", meta.region);
    read(j, "kernel", meta.kernel);
    read(j, "box", meta.box);
    read(j, "noise_level", meta.noise_level);
}

}  // namespace stabinv

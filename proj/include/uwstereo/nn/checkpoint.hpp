#pragma once

#include "uwstereo/nn/network.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace uwstereo::nn {

/// Binary checkpoint layout (all integers little-endian):
///   "UWSTNN\0\0"      8-byte magic
///   u32 version       currently 1
///   u64 manifest size
///   manifest          UTF-8 JSON: {"meta":..., "networks":[{"name":..., "graph":...}]}
///   f32 payload       every parameter of every network, in manifest order
/// A pretty-printed copy of the manifest is written next to it as <path>.json.
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Network<float>> networks;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace uwstereo::nn

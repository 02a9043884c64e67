#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/flowmatch/micro_denoiser.hpp"

namespace trajforge::fm {

namespace tar {

struct Member {
    std::string name;
    std::vector<std::uint8_t> bytes;
};

/// POSIX ustar archive of regular files, in the given order. Timestamps,
/// owners and modes are fixed so equal members give equal bytes.
std::vector<std::uint8_t> write(const std::vector<Member>& members);
/// Regular-file members of a ustar archive. Throws InputError on corruption.
std::vector<Member> read(std::span<const std::uint8_t> archive);

}  // namespace tar

/// Trained weights plus what is needed to rebuild and describe the model.
/// Archive layout: manifest.json, then params/<name>.htf per parameter.
struct Checkpoint {
    DenoiserConfig model;
    nlohmann::json train_config = nlohmann::json::object();
    std::size_t step = 0;
    DenoiserParams<float> params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> archive);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trajforge::fm

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/layout.hpp"
#include "trajforge/trajectory.hpp"

namespace trajforge {

using json = nlohmann::json;

// Binary PGM (P5, maxval 255). Pixels above 127 are foreground.
ObjectMask decode_pgm(std::span<const std::uint8_t> bytes, std::size_t frame = 0);
std::vector<std::uint8_t> encode_pgm(const ObjectMask& mask);
ObjectMask read_pgm(const std::filesystem::path& path, std::size_t frame = 0);
void write_pgm(const std::filesystem::path& path, const ObjectMask& mask);

// { "width", "height", "t_ref", "fps"?, "tracks": [ { "xy": [[x,y],...], "conf": [c,...] } ] }
PointTracks tracks_from_json(const json& j);
json tracks_to_json(const PointTracks& tracks);

// { "fps", "anchors": [ { "p": [x,y], "s": [w,h], "v": 0|1 } ] }
Trajectory trajectory_from_json(const json& j);
json trajectory_to_json(const Trajectory& traj);

/// A problem at a specific location of a JSON payload (RFC 6901 pointer).
struct FieldError {
    std::string field;
    std::string message;
};

// { "canvas": {"t","h","w"}, "entries": [ {"id","modality","priority","trajectory","ref_file"} ], "caption" }
/// Collects every field-level problem instead of stopping at the first.
std::optional<CompositionLayout> parse_layout(const json& j, std::vector<FieldError>& errors);
/// Throws InputError listing the field errors.
CompositionLayout layout_from_json(const json& j);
json layout_to_json(const CompositionLayout& layout);

json read_json_file(const std::filesystem::path& path);
/// Writes `j.dump(2)` plus a trailing newline.
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace trajforge

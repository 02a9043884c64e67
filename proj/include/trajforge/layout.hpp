#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajforge/trajectory.hpp"

namespace trajforge {

enum class Modality { image, video };
enum class Priority { none, foreground, background };

std::string_view to_string(Modality m) noexcept;
std::string_view to_string(Priority p) noexcept;
std::optional<Modality> parse_modality(std::string_view s) noexcept;
std::optional<Priority> parse_priority(std::string_view s) noexcept;

/// Extents of the latent canvas references are composed onto.
struct Canvas {
    std::size_t frames = 8;
    std::size_t height = 64;
    std::size_t width = 64;

    friend bool operator==(const Canvas&, const Canvas&) = default;
};

struct LayoutEntry {
    std::string reference_id;
    Modality modality = Modality::image;
    Trajectory trajectory;
    Priority priority = Priority::none;
    /// Where the reference features live, relative to the layout file.
    std::string ref_file;

    friend bool operator==(const LayoutEntry&, const LayoutEntry&) = default;
};

struct CompositionLayout {
    Canvas canvas;
    std::vector<LayoutEntry> entries;
    std::string caption;

    const LayoutEntry* find(std::string_view id) const noexcept;

    friend bool operator==(const CompositionLayout&, const CompositionLayout&) = default;
};

}  // namespace trajforge

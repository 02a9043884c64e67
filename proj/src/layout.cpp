#include "trajforge/layout.hpp"

namespace trajforge {

std::string_view to_string(Modality m) noexcept { return m == Modality::image ? "image" : "video"; }

std::string_view to_string(Priority p) noexcept {
    switch (p) {
        case Priority::foreground: return "foreground";
        case Priority::background: return "background";
        case Priority::none: break;
    }
    return "none";
}

std::optional<Modality> parse_modality(std::string_view s) noexcept {
    if (s == "image") return Modality::image;
    if (s == "video") return Modality::video;
    return std::nullopt;
}

std::optional<Priority> parse_priority(std::string_view s) noexcept {
    if (s == "none") return Priority::none;
    if (s == "foreground") return Priority::foreground;
    if (s == "background") return Priority::background;
    return std::nullopt;
}

const LayoutEntry* CompositionLayout::find(std::string_view id) const noexcept {
    for (const auto& e : entries) {
        if (e.reference_id == id) return &e;
    }
    return nullptr;
}

}  // namespace trajforge

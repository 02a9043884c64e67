#include "trajforge/decompositor.hpp"

#include <fmt/format.h>

#include "trajforge/error.hpp"

namespace trajforge {

Tensor crop_reference(const Tensor& frames, const Trajectory& traj, CropSize out_size) {
    require_rank(frames, 4, "crop_reference frames");
    const std::size_t t = frames.extent(0);
    if (traj.size() != t) {
        throw DimensionError(fmt::format("crop_reference: trajectory has {} anchors for {} frames", traj.size(), t));
    }
    if (out_size.height == 0 || out_size.width == 0) throw DimensionError("crop_reference: empty output size");
    const std::size_t h = out_size.height, w = out_size.width;
    Tensor grid({t, h, w, 2});
    for (std::size_t f = 0; f < t; ++f) {
        const auto& a = traj[f];
        for (std::size_t y = 0; y < h; ++y) {
            const double ry = (static_cast<double>(y) + 0.5) / static_cast<double>(h) - 0.5;
            for (std::size_t x = 0; x < w; ++x) {
                const double rx = (static_cast<double>(x) + 0.5) / static_cast<double>(w) - 0.5;
                float gx = 10.0f, gy = 10.0f;
                if (a.visible) {
                    gx = static_cast<float>(a.p.x + a.s.x * rx - 0.5);
                    gy = static_cast<float>(a.p.y + a.s.y * ry - 0.5);
                }
                grid.at(f, y, x, 0) = gx;
                grid.at(f, y, x, 1) = gy;
            }
        }
    }
    return grid_sample_frames(frames, SamplingGrid(std::move(grid)));
}

Decomposition decompose(const Tensor& frames, const std::vector<ObjectInput>& objects, const DecomposeOptions& options) {
    require_rank(frames, 4, "decompose frames");
    if (options.canvas.frames == 0 || options.canvas.height == 0 || options.canvas.width == 0) {
        throw DomainError("decompose: canvas extents must be >= 1");
    }
    Decomposition out;
    out.layout.canvas = options.canvas;
    out.layout.caption = options.caption;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& obj = objects[i];
        if (obj.tracks.frames() != frames.extent(0)) {
            throw DomainError(fmt::format("object {}: tracks cover {} frames, video has {}", i, obj.tracks.frames(), frames.extent(0)));
        }
        if (obj.tracks.width != frames.extent(3) || obj.tracks.height != frames.extent(2)) {
            throw DomainError(fmt::format("object {}: track canvas {}x{} differs from video {}x{}", i, obj.tracks.width,
                                          obj.tracks.height, frames.extent(3), frames.extent(2)));
        }
        Trajectory traj = extract_trajectory(obj.tracks, obj.mask_at_ref);
        out.references.push_back(crop_reference(frames, traj, options.crop));
        const std::string id = fmt::format("obj{}", i);
        out.layout.entries.push_back(LayoutEntry{id, Modality::video, std::move(traj), Priority::none, fmt::format("ref_{}.htf", id)});
    }
    return out;
}

Decomposition decompose(const Tensor& frames, const std::vector<ObjectMask>& masks, const std::vector<PointTracks>& tracks,
                        const DecomposeOptions& options) {
    if (masks.size() != tracks.size()) {
        throw DomainError(fmt::format("decompose: {} masks but {} track sets", masks.size(), tracks.size()));
    }
    std::vector<ObjectInput> objects;
    objects.reserve(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) objects.push_back({masks[i], tracks[i]});
    return decompose(frames, objects, options);
}

}  // namespace trajforge

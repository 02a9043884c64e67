#include "trajforge/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "trajforge/error.hpp"

namespace trajforge {

namespace {

Vec2 cluster_centroid(const PointTracks& tracks, std::size_t t) {
    Vec2 c;
    for (const auto& tr : tracks.tracks) {
        c.x += tr.xy[t].x;
        c.y += tr.xy[t].y;
    }
    const double k = static_cast<double>(tracks.count());
    return {c.x / k, c.y / k};
}

double lerp(double a, double b, double w) { return a + (b - a) * w; }

}  // namespace

bool TrajectoryAnchor::valid() const noexcept {
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    auto scale_ok = [](double v) { return std::isfinite(v) && v >= kMinScale * (1.0 - 1e-12) && v <= 1.0; };
    return in_unit(p.x) && in_unit(p.y) && scale_ok(s.x) && scale_ok(s.y);
}

Trajectory::Trajectory(std::vector<TrajectoryAnchor> anchors, double fps)
    : anchors_(std::move(anchors)), fps_(fps) {
    if (anchors_.empty()) throw DomainError("trajectory must have at least one anchor");
    if (!(std::isfinite(fps_) && fps_ > 0.0)) throw DomainError("trajectory fps must be positive");
    for (std::size_t t = 0; t < anchors_.size(); ++t) {
        if (!anchors_[t].valid()) {
            const auto& a = anchors_[t];
            throw DomainError(fmt::format("anchor {} invalid: p=({}, {}) s=({}, {})", t, a.p.x, a.p.y, a.s.x, a.s.y));
        }
    }
}

Trajectory Trajectory::constant(const TrajectoryAnchor& anchor, std::size_t frames, double fps) {
    return Trajectory(std::vector<TrajectoryAnchor>(frames, anchor), fps);
}

ObjectMask::ObjectMask(std::size_t w, std::size_t h, std::size_t frame_index)
    : width(w), height(h), frame(frame_index), pixels(w * h, 0) {}

std::size_t ObjectMask::area() const noexcept {
    return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](std::uint8_t v) { return v != 0; }));
}

PixelBounds mask_bounds(const ObjectMask& mask) {
    PixelBounds b{std::numeric_limits<std::size_t>::max(), std::numeric_limits<std::size_t>::max(), 0, 0};
    bool any = false;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            any = true;
            b.x0 = std::min(b.x0, x);
            b.y0 = std::min(b.y0, y);
            b.x1 = std::max(b.x1, x);
            b.y1 = std::max(b.y1, y);
        }
    }
    if (!any) throw DomainError("mask has no foreground pixels");
    return b;
}

Vec2 mask_centroid(const ObjectMask& mask) {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < mask.height; ++y) {
        for (std::size_t x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            sx += static_cast<double>(x) + 0.5;
            sy += static_cast<double>(y) + 0.5;
            ++n;
        }
    }
    if (n == 0) throw DomainError("mask has no foreground pixels");
    return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

void PointTracks::validate() const {
    if (tracks.empty()) throw DomainError("point tracks: need at least one track");
    if (width == 0 || height == 0) throw DomainError("point tracks: canvas size must be positive");
    const std::size_t t = tracks.front().xy.size();
    if (t == 0) throw DomainError("point tracks: tracks are empty");
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        if (tracks[i].xy.size() != t || tracks[i].conf.size() != t) {
            throw DomainError(fmt::format("point tracks: track {} length differs from {}", i, t));
        }
        for (std::size_t f = 0; f < t; ++f) {
            const auto& p = tracks[i].xy[f];
            const double c = tracks[i].conf[f];
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !(c >= 0.0 && c <= 1.0)) {
                throw DomainError(fmt::format("point tracks: track {} frame {} has invalid value", i, f));
            }
        }
    }
    if (t_ref >= t) throw DomainError(fmt::format("point tracks: t_ref {} outside [0, {})", t_ref, t));
}

PartitionGrid choose_partition(std::size_t k, double bbox_width, double bbox_height) {
    const double aspect = bbox_width / bbox_height;
    PartitionGrid best;
    double best_cost = std::numeric_limits<double>::infinity();
    // Ascending rows means descending columns; strict '<' keeps the first
    // (most-column) candidate on ties.
    for (std::size_t r = 1; r <= k; ++r) {
        if (k % r != 0) continue;
        const std::size_t c = k / r;
        const double cost = std::abs(std::log((static_cast<double>(c) / static_cast<double>(r)) / aspect));
        if (cost < best_cost - 1e-12) {
            best_cost = cost;
            best = {r, c};
        }
    }
    return best;
}

std::vector<Vec2> sample_anchors(const ObjectMask& mask, const AnchorSamplingOptions& options) {
    const std::size_t area = mask.area();
    if (area == 0) throw DomainError("sample_anchors: empty mask");
    if (static_cast<double>(area) < options.min_patch_area) return {mask_centroid(mask)};

    const auto k = static_cast<std::size_t>(std::clamp<double>(std::round(static_cast<double>(area) / options.min_patch_area),
                                                               1.0, static_cast<double>(std::max<std::size_t>(options.max_anchors, 1))));
    const PixelBounds b = mask_bounds(mask);
    const PartitionGrid grid = choose_partition(k, static_cast<double>(b.width()), static_cast<double>(b.height()));

    auto edge = [](std::size_t origin, std::size_t extent, std::size_t i, std::size_t n) {
        return origin + (i * extent) / n;
    };

    std::vector<Vec2> points;
    points.reserve(k);
    for (std::size_t r = 0; r < grid.rows; ++r) {
        const std::size_t ya = edge(b.y0, b.height(), r, grid.rows), yb = edge(b.y0, b.height(), r + 1, grid.rows);
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const std::size_t xa = edge(b.x0, b.width(), c, grid.cols), xb = edge(b.x0, b.width(), c + 1, grid.cols);
            double sx = 0.0, sy = 0.0;
            std::size_t n = 0;
            for (std::size_t y = ya; y < yb; ++y) {
                for (std::size_t x = xa; x < xb; ++x) {
                    if (!mask.at(x, y)) continue;
                    sx += static_cast<double>(x) + 0.5;
                    sy += static_cast<double>(y) + 0.5;
                    ++n;
                }
            }
            if (n > 0) points.push_back({sx / static_cast<double>(n), sy / static_cast<double>(n)});
        }
    }
    return points;
}

double scale_factor(const PointTracks& tracks, std::size_t t) {
    tracks.validate();
    if (t >= tracks.frames()) throw DomainError(fmt::format("scale_factor: frame {} out of range", t));
    if (tracks.count() < 2) return 1.0;
    const Vec2 ct = cluster_centroid(tracks, t);
    const Vec2 cr = cluster_centroid(tracks, tracks.t_ref);
    // A point sitting on the reference centroid says nothing about scale; its
    // ratio would be 0 / eps regardless of how the cluster moves.
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& tr : tracks.tracks) {
        const double dr = std::hypot(tr.xy[tracks.t_ref].x - cr.x, tr.xy[tracks.t_ref].y - cr.y);
        if (dr <= kScaleEpsilon) continue;
        const double dt = std::hypot(tr.xy[t].x - ct.x, tr.xy[t].y - ct.y);
        sum += dt / (dr + kScaleEpsilon);
        ++used;
    }
    return used ? sum / static_cast<double>(used) : 1.0;
}

Trajectory extract_trajectory(const PointTracks& tracks, const ObjectMask& mask_at_ref) {
    tracks.validate();
    if (mask_at_ref.frame != tracks.t_ref) {
        throw DomainError(fmt::format("extract_trajectory: mask frame {} differs from t_ref {}", mask_at_ref.frame, tracks.t_ref));
    }
    if (mask_at_ref.width != tracks.width || mask_at_ref.height != tracks.height) {
        throw DomainError("extract_trajectory: mask size differs from track canvas");
    }
    const PixelBounds b = mask_bounds(mask_at_ref);
    const double w = static_cast<double>(tracks.width), h = static_cast<double>(tracks.height);
    const Vec2 base{static_cast<double>(b.width()) / w, static_cast<double>(b.height()) / h};

    std::vector<TrajectoryAnchor> anchors(tracks.frames());
    for (std::size_t t = 0; t < anchors.size(); ++t) {
        const Vec2 c = cluster_centroid(tracks, t);
        const double gamma = scale_factor(tracks, t);
        double conf = 0.0;
        for (const auto& tr : tracks.tracks) conf += tr.conf[t];
        conf /= static_cast<double>(tracks.count());

        auto& a = anchors[t];
        a.p = {std::clamp(c.x / w, 0.0, 1.0), std::clamp(c.y / h, 0.0, 1.0)};
        a.s = {std::clamp(gamma * base.x, kMinScale, 1.0), std::clamp(gamma * base.y, kMinScale, 1.0)};
        a.visible = conf >= kVisibilityThreshold;
    }
    return Trajectory(std::move(anchors), tracks.fps);
}

Trajectory resample_trajectory(const Trajectory& traj, std::size_t target_frames) {
    if (target_frames == 0) throw DomainError("resample_trajectory: target must be >= 1");
    const std::size_t n = traj.size();
    if (n == target_frames) return traj;
    std::vector<TrajectoryAnchor> out(target_frames);
    for (std::size_t j = 0; j < target_frames; ++j) {
        const double pos = (target_frames == 1 || n == 1)
                               ? 0.0
                               : static_cast<double>(j) * static_cast<double>(n - 1) / static_cast<double>(target_frames - 1);
        std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(pos)), n - 1);
        const double w = pos - static_cast<double>(i0);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const auto& a = traj[i0];
        const auto& b = traj[i1];
        auto& o = out[j];
        o.p = {lerp(a.p.x, b.p.x, w), lerp(a.p.y, b.p.y, w)};
        o.s = {lerp(a.s.x, b.s.x, w), lerp(a.s.y, b.s.y, w)};
        o.visible = (w < 0.5 ? a : b).visible;
    }
    const double fps = traj.fps() * (n > 1 && target_frames > 1 ? static_cast<double>(target_frames - 1) / static_cast<double>(n - 1) : 1.0);
    return Trajectory(std::move(out), fps);
}

}  // namespace trajforge

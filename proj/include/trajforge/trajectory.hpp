#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace trajforge {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Smallest per-axis normalized scale an anchor may carry. Inverse warping
/// divides by the scale, so it is clamped rather than allowed to reach zero.
inline constexpr double kMinScale = 1.0 / 64.0;

/// One time step of a trajectory: normalized centroid `p` in [0,1]^2,
/// normalized extent `s` in [kMinScale, 1]^2 (fractions of canvas width and
/// height), and a binary visibility flag.
struct TrajectoryAnchor {
    Vec2 p{0.5, 0.5};
    Vec2 s{1.0, 1.0};
    bool visible = true;

    bool valid() const noexcept;
    friend bool operator==(const TrajectoryAnchor&, const TrajectoryAnchor&) = default;
};

class Trajectory {
public:
    Trajectory(std::vector<TrajectoryAnchor> anchors, double fps);

    const std::vector<TrajectoryAnchor>& anchors() const noexcept { return anchors_; }
    const TrajectoryAnchor& operator[](std::size_t t) const { return anchors_[t]; }
    std::size_t size() const noexcept { return anchors_.size(); }
    double fps() const noexcept { return fps_; }

    /// Same anchor at every one of `frames` steps.
    static Trajectory constant(const TrajectoryAnchor& anchor, std::size_t frames, double fps = 16.0);

    friend bool operator==(const Trajectory&, const Trajectory&) = default;

private:
    std::vector<TrajectoryAnchor> anchors_;
    double fps_;
};

/// Binary object mask of one video frame. `pixels` is row-major, 0 or 1.
struct ObjectMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t frame = 0;
    std::vector<std::uint8_t> pixels;

    ObjectMask() = default;
    ObjectMask(std::size_t w, std::size_t h, std::size_t frame_index = 0);

    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
    void set(std::size_t x, std::size_t y, bool on) { pixels[y * width + x] = on ? 1 : 0; }
    std::size_t area() const noexcept;
};

/// Inclusive pixel-index bounds of the foreground.
struct PixelBounds {
    std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    std::size_t width() const noexcept { return x1 - x0 + 1; }
    std::size_t height() const noexcept { return y1 - y0 + 1; }
};

/// Throws DomainError on an empty mask.
PixelBounds mask_bounds(const ObjectMask& mask);

/// Foreground centroid in continuous pixel coordinates (pixel i spans [i, i+1)).
Vec2 mask_centroid(const ObjectMask& mask);

/// K point tracks over T frames. Positions are continuous pixel coordinates
/// on a `width` x `height` canvas; confidences are in [0,1].
struct PointTracks {
    struct Track {
        std::vector<Vec2> xy;
        std::vector<double> conf;
    };

    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t t_ref = 0;
    double fps = 16.0;
    std::vector<Track> tracks;

    std::size_t frames() const noexcept { return tracks.empty() ? 0 : tracks.front().xy.size(); }
    std::size_t count() const noexcept { return tracks.size(); }

    /// Throws DomainError if the invariants (K >= 1, equal lengths, t_ref < T) fail.
    void validate() const;
};

struct AnchorSamplingOptions {
    double min_patch_area = 1024.0;
    std::size_t max_anchors = 16;
};

/// Anchor points for tracking: one foreground centroid per cell of an
/// aspect-matched r x c partition of the mask's bounding box, or the single
/// mask centroid for objects smaller than `min_patch_area`.
std::vector<Vec2> sample_anchors(const ObjectMask& mask, const AnchorSamplingOptions& options = {});

/// The (rows, cols) partition used by sample_anchors for `k` cells.
struct PartitionGrid {
    std::size_t rows = 1;
    std::size_t cols = 1;
};
PartitionGrid choose_partition(std::size_t k, double bbox_width, double bbox_height);

inline constexpr double kScaleEpsilon = 1e-6;
inline constexpr double kVisibilityThreshold = 0.5;

/// Mean ratio of each point's distance to the cluster centroid at frame `t`
/// over the same distance at `t_ref`. Points on the reference centroid are
/// skipped; 1 when nothing is left (single-point clusters included).
double scale_factor(const PointTracks& tracks, std::size_t t);

/// Point-to-scale trajectory: centroid path of the tracked cluster, bounding
/// box scale at t_ref modulated by scale_factor, visibility from the mean
/// tracker confidence.
Trajectory extract_trajectory(const PointTracks& tracks, const ObjectMask& mask_at_ref);

/// Endpoint-aligned linear resampling of p and s; nearest-neighbour for v.
Trajectory resample_trajectory(const Trajectory& traj, std::size_t target_frames);

}  // namespace trajforge

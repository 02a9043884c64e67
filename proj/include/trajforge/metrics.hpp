#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajforge/tensor.hpp"
#include "trajforge/trajectory.hpp"

namespace trajforge::metrics {

/// Axis-aligned box in pixel coordinates. Boxes derived from masks use
/// inclusive pixel indices, so a single pixel yields a zero-area box.
struct Box {
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
    std::size_t frame = 0;

    double area() const noexcept { return (x_max - x_min) * (y_max - y_min); }
    Vec2 centroid() const noexcept { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
    bool operator==(const Box&) const = default;
};

/// Per-frame boxes; nullopt marks a frame where the object is absent.
using BoxTrack = std::vector<std::optional<Box>>;

double iou(const Box& a, const Box& b) noexcept;

struct FrameMean {
    double value = 0.0;  // NaN when no frame was usable
    std::size_t frames_used = 0;
    std::size_t frames_absent = 0;
};

/// Mean IoU over frames where both boxes exist. Throws DimensionError on
/// length mismatch.
FrameMean miou(const BoxTrack& gen, const BoxTrack& target);
double miou(std::span<const Box> gen, std::span<const Box> target);

/// Mean centroid offset over the frame diagonal.
FrameMean centroid_distance(const BoxTrack& gen, const BoxTrack& target, double frame_width, double frame_height);
double centroid_distance(std::span<const Box> gen, std::span<const Box> target, double frame_width, double frame_height);

/// Tight boxes of each mask; empty masks give nullopt.
BoxTrack boxes_from_masks(std::span<const ObjectMask> masks);

/// Rasterizes a box back to a mask (inclusive pixel indices).
ObjectMask mask_from_box(const Box& box, std::size_t width, std::size_t height);

/// Equal-dimension, nonzero vectors, one per frame.
class EmbeddingSequence {
public:
    EmbeddingSequence(std::vector<std::vector<double>> vectors, std::string source);

    /// From an HTF tensor [T, D] or [D].
    static EmbeddingSequence from_tensor(const Tensor& t, std::string source);

    std::size_t size() const noexcept { return vectors_.size(); }
    std::size_t dim() const noexcept { return vectors_.front().size(); }
    const std::vector<double>& operator[](std::size_t i) const { return vectors_[i]; }
    const std::string& source() const noexcept { return source_; }
    std::vector<double> mean() const;

private:
    std::vector<std::vector<double>> vectors_;
    std::string source_;
};

/// Throws DomainError on zero norm, DimensionError on size mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

/// Mean cosine of consecutive frames; needs at least two.
double temporal_consistency(const EmbeddingSequence& frames);

/// Mean cosine between a reference embedding and each frame's region embedding.
double region_similarity(std::span<const double> reference, const EmbeddingSequence& regions);

/// Cosine between a text embedding and the average of all frame embeddings.
double text_alignment(std::span<const double> text, const EmbeddingSequence& frames);

/// Pixel crops of [T, C, H, W] frames under per-frame boxes (inclusive
/// indices, clipped to the frame); absent boxes give nullopt.
std::vector<std::optional<Tensor>> crop_regions(const Tensor& frames, const BoxTrack& boxes);

inline constexpr const char* kBuiltinEmbeddingTag = "builtin-pooled";

/// Fallback descriptor for tests without an external encoder: channel-mean
/// image average-pooled to 8x8, flattened to 64 values per frame.
EmbeddingSequence builtin_embedding(const Tensor& frames);

}  // namespace trajforge::metrics

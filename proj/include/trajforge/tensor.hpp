#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace trajforge {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Dense row-major float32 array. Extents are all >= 1 and every element is
/// finite; both are checked at construction.
///
/// Axis meaning is by convention of the caller: videos and latents are
/// [T, C, H, W], images [C, H, W], sampling grids [T, H, W, 2].
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    float operator[](std::size_t i) const noexcept { return data_[i]; }
    float& operator[](std::size_t i) noexcept { return data_[i]; }

    // Flat offset helpers for the common ranks.
    std::size_t offset(std::size_t a, std::size_t b, std::size_t c) const noexcept {
        return (a * shape_[1] + b) * shape_[2] + c;
    }
    std::size_t offset(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
        return ((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
    }
    float at(std::size_t a, std::size_t b, std::size_t c) const noexcept { return data_[offset(a, b, c)]; }
    float& at(std::size_t a, std::size_t b, std::size_t c) noexcept { return data_[offset(a, b, c)]; }
    float at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
        return data_[offset(a, b, c, d)];
    }
    float& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept {
        return data_[offset(a, b, c, d)];
    }

    Tensor reshaped(Shape shape) const;

    /// Throws DomainError if any element is NaN or Inf.
    void check_finite(const char* what = "tensor") const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

std::size_t shape_numel(const Shape& shape);

/// Throws DimensionError unless `t` has exactly `rank` axes.
void require_rank(const Tensor& t, std::size_t rank, const char* what);

/// Continuous source coordinates for inverse warping, [T, H, W, 2] or [H, W, 2].
/// Values live in the centered reference frame [-0.5, 0.5]^2 (x then y);
/// anything outside that square samples zero padding.
class SamplingGrid {
public:
    explicit SamplingGrid(Tensor values);

    const Tensor& values() const noexcept { return values_; }
    bool has_time() const noexcept { return values_.rank() == 4; }
    std::size_t frames() const noexcept { return has_time() ? values_.extent(0) : 1; }
    std::size_t height() const noexcept { return values_.extent(has_time() ? 1 : 0); }
    std::size_t width() const noexcept { return values_.extent(has_time() ? 2 : 1); }

    /// Grid whose value at each target cell is that cell's own centered coordinate.
    static SamplingGrid identity(std::size_t height, std::size_t width);

private:
    Tensor values_;
};

/// Bilinear sampling with zero padding. `source` is [C, Hs, Ws]; the result is
/// [T, C, H, W] for a timed grid, [C, H, W] otherwise.
Tensor grid_sample(const Tensor& source, const SamplingGrid& grid);

/// Per-frame variant: `source` is [T, C, Hs, Ws] and frame t is sampled with
/// grid frame t. Grid must be timed with the same T.
Tensor grid_sample_frames(const Tensor& source, const SamplingGrid& grid);

/// Endpoint-aligned linear interpolation along axis 0 of a [Ts, C, H, W] clip.
Tensor temporal_resample(const Tensor& clip, std::size_t target_frames);

/// [C, H, W] -> [T, C, H, W] with every frame equal to `image`.
Tensor broadcast_time(const Tensor& image, std::size_t frames);

/// Stacks [T, Ci, H, W] parts along the channel axis, in argument order.
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);

/// Channels [begin, begin + count) of a [T, C, H, W] tensor.
Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count);

}  // namespace trajforge

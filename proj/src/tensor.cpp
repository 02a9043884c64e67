#include "trajforge/tensor.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "trajforge/error.hpp"

namespace trajforge {

namespace {

// Fractional bilinear weights closer than this to 0 or 1 are snapped, so that
// grids which land on pixel centers up to float round-off sample exactly.
constexpr double kSnap = 1e-4;

void validate_shape(const Shape& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor must have rank >= 1");
    }
    for (std::size_t e : shape) {
        if (e == 0) {
            throw DimensionError(fmt::format("zero extent in shape {}", to_string(shape)));
        }
    }
}

struct Tap {
    long lo;
    double w_hi;
};

// Source pixel coordinate of a centered coordinate, with snapping.
Tap locate(double centered, std::size_t extent) {
    const double px = (centered + 0.5) * static_cast<double>(extent) - 0.5;
    double lo = std::floor(px);
    double frac = px - lo;
    if (frac < kSnap) {
        frac = 0.0;
    } else if (frac > 1.0 - kSnap) {
        frac = 0.0;
        lo += 1.0;
    }
    return {static_cast<long>(lo), frac};
}

// Samples one point of a [C, Hs, Ws] plane block starting at `src` into `out`
// with stride `out_stride` between channels.
void sample_point(const float* src, std::size_t channels, std::size_t hs, std::size_t ws, double gx,
                  double gy, float* out, std::size_t out_stride) {
    if (!(std::abs(gx) < 1e3 && std::abs(gy) < 1e3)) {
        for (std::size_t c = 0; c < channels; ++c) out[c * out_stride] = 0.0f;
        return;
    }
    const Tap tx = locate(gx, ws);
    const Tap ty = locate(gy, hs);
    const long xs[2] = {tx.lo, tx.lo + 1};
    const long ys[2] = {ty.lo, ty.lo + 1};
    const double wx[2] = {1.0 - tx.w_hi, tx.w_hi};
    const double wy[2] = {1.0 - ty.w_hi, ty.w_hi};
    const std::size_t plane = hs * ws;
    for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int j = 0; j < 2; ++j) {
            if (wy[j] == 0.0 || ys[j] < 0 || ys[j] >= static_cast<long>(hs)) continue;
            for (int i = 0; i < 2; ++i) {
                if (wx[i] == 0.0 || xs[i] < 0 || xs[i] >= static_cast<long>(ws)) continue;
                acc += wy[j] * wx[i] * src[c * plane + static_cast<std::size_t>(ys[j]) * ws + static_cast<std::size_t>(xs[i])];
            }
        }
        out[c * out_stride] = static_cast<float>(acc);
    }
}

}  // namespace

std::string to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ", ")); }

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    if (!std::isfinite(fill)) throw DomainError("non-finite fill value");
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_)) {
        throw DimensionError(fmt::format("data length {} does not match shape {}", data_.size(), to_string(shape_)));
    }
    check_finite();
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError(fmt::format("axis {} out of range for shape {}", axis, to_string(shape_)));
    }
    return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
    validate_shape(shape);
    if (shape_numel(shape) != numel()) {
        throw DimensionError(fmt::format("cannot reshape {} to {}", to_string(shape_), to_string(shape)));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

void Tensor::check_finite(const char* what) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw DomainError(fmt::format("{} has non-finite element at flat index {}", what, i));
        }
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(fmt::format("{} must have rank {}, got shape {}", what, rank, to_string(t.shape())));
    }
}

SamplingGrid::SamplingGrid(Tensor values) : values_(std::move(values)) {
    if ((values_.rank() != 3 && values_.rank() != 4) || values_.shape().back() != 2) {
        throw DimensionError(fmt::format("sampling grid must be [T,H,W,2] or [H,W,2], got {}", to_string(values_.shape())));
    }
}

SamplingGrid SamplingGrid::identity(std::size_t height, std::size_t width) {
    Tensor g({height, width, 2});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            g.at(y, x, 0) = static_cast<float>((static_cast<double>(x) + 0.5) / static_cast<double>(width) - 0.5);
            g.at(y, x, 1) = static_cast<float>((static_cast<double>(y) + 0.5) / static_cast<double>(height) - 0.5);
        }
    }
    return SamplingGrid(std::move(g));
}

Tensor grid_sample(const Tensor& source, const SamplingGrid& grid) {
    require_rank(source, 3, "grid_sample source");
    const std::size_t c = source.extent(0), hs = source.extent(1), ws = source.extent(2);
    const std::size_t t = grid.frames(), h = grid.height(), w = grid.width();
    Tensor out = grid.has_time() ? Tensor({t, c, h, w}) : Tensor({c, h, w});
    const auto g = grid.values().data();
    const std::size_t plane = h * w;
    for (std::size_t f = 0; f < t; ++f) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t gi = ((f * h + y) * w + x) * 2;
                float* dst = out.data().data() + f * c * plane + y * w + x;
                sample_point(source.data().data(), c, hs, ws, g[gi], g[gi + 1], dst, plane);
            }
        }
    }
    return out;
}

Tensor grid_sample_frames(const Tensor& source, const SamplingGrid& grid) {
    require_rank(source, 4, "grid_sample_frames source");
    if (!grid.has_time() || grid.frames() != source.extent(0)) {
        throw DimensionError(fmt::format("grid {} does not match source frames {}", to_string(grid.values().shape()),
                                         to_string(source.shape())));
    }
    const std::size_t t = source.extent(0), c = source.extent(1), hs = source.extent(2), ws = source.extent(3);
    const std::size_t h = grid.height(), w = grid.width();
    Tensor out({t, c, h, w});
    const auto g = grid.values().data();
    const std::size_t plane = h * w;
    for (std::size_t f = 0; f < t; ++f) {
        const float* src = source.data().data() + f * c * hs * ws;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t gi = ((f * h + y) * w + x) * 2;
                float* dst = out.data().data() + f * c * plane + y * w + x;
                sample_point(src, c, hs, ws, g[gi], g[gi + 1], dst, plane);
            }
        }
    }
    return out;
}

Tensor temporal_resample(const Tensor& clip, std::size_t target_frames) {
    require_rank(clip, 4, "temporal_resample clip");
    if (target_frames == 0) throw DimensionError("temporal_resample target must be >= 1");
    const std::size_t ts = clip.extent(0);
    const std::size_t frame = clip.numel() / ts;
    Shape shape = clip.shape();
    shape[0] = target_frames;
    Tensor out(shape);
    for (std::size_t j = 0; j < target_frames; ++j) {
        const double pos = (target_frames == 1 || ts == 1)
                               ? 0.0
                               : static_cast<double>(j) * static_cast<double>(ts - 1) / static_cast<double>(target_frames - 1);
        std::size_t i0 = static_cast<std::size_t>(std::floor(pos));
        if (i0 >= ts - 1) i0 = ts - 1;
        const double w = pos - static_cast<double>(i0);
        const float* a = clip.data().data() + i0 * frame;
        float* dst = out.data().data() + j * frame;
        if (w == 0.0) {
            std::copy(a, a + frame, dst);
            continue;
        }
        const float* b = a + frame;
        for (std::size_t k = 0; k < frame; ++k) {
            dst[k] = static_cast<float>((1.0 - w) * a[k] + w * b[k]);
        }
    }
    return out;
}

Tensor broadcast_time(const Tensor& image, std::size_t frames) {
    require_rank(image, 3, "broadcast_time image");
    if (frames == 0) throw DimensionError("broadcast_time frame count must be >= 1");
    Tensor out({frames, image.extent(0), image.extent(1), image.extent(2)});
    const std::size_t n = image.numel();
    for (std::size_t f = 0; f < frames; ++f) {
        std::copy(image.data().begin(), image.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(f * n));
    }
    return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_channels needs at least one part");
    for (const Tensor& p : parts) require_rank(p, 4, "concat_channels part");
    const std::size_t t = parts[0].extent(0), h = parts[0].extent(2), w = parts[0].extent(3);
    std::size_t channels = 0;
    for (const Tensor& p : parts) {
        if (p.extent(0) != t || p.extent(2) != h || p.extent(3) != w) {
            throw DimensionError(fmt::format("concat_channels part {} does not match T,H,W of {}", to_string(p.shape()),
                                             to_string(parts[0].shape())));
        }
        channels += p.extent(1);
    }
    Tensor out({t, channels, h, w});
    const std::size_t plane = h * w;
    for (std::size_t f = 0; f < t; ++f) {
        float* dst = out.data().data() + f * channels * plane;
        for (const Tensor& p : parts) {
            const std::size_t n = p.extent(1) * plane;
            const float* src = p.data().data() + f * n;
            dst = std::copy(src, src + n, dst);
        }
    }
    return out;
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
    return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count) {
    require_rank(t, 4, "slice_channels input");
    const std::size_t frames = t.extent(0), c = t.extent(1), plane = t.extent(2) * t.extent(3);
    if (count == 0 || begin + count > c) {
        throw DimensionError(fmt::format("channel slice [{}, {}) out of range for {}", begin, begin + count, to_string(t.shape())));
    }
    Tensor out({frames, count, t.extent(2), t.extent(3)});
    for (std::size_t f = 0; f < frames; ++f) {
        const float* src = t.data().data() + (f * c + begin) * plane;
        std::copy(src, src + count * plane, out.data().data() + f * count * plane);
    }
    return out;
}

}  // namespace trajforge

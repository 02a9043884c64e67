#include "trajforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "trajforge/error.hpp"

namespace trajforge::metrics {

namespace {

template <class F>
FrameMean frame_mean(const BoxTrack& gen, const BoxTrack& target, F&& per_frame) {
    if (gen.size() != target.size()) {
        throw DimensionError(fmt::format("box lists differ in length: {} vs {}", gen.size(), target.size()));
    }
    FrameMean out;
    double sum = 0.0;
    for (std::size_t t = 0; t < gen.size(); ++t) {
        if (!gen[t] || !target[t]) {
            ++out.frames_absent;
            continue;
        }
        sum += per_frame(*gen[t], *target[t]);
        ++out.frames_used;
    }
    out.value = out.frames_used ? sum / static_cast<double>(out.frames_used) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

BoxTrack present(std::span<const Box> boxes) { return BoxTrack(boxes.begin(), boxes.end()); }

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

double iou(const Box& a, const Box& b) noexcept {
    const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) {
        return (a.x_min == b.x_min && a.y_min == b.y_min && a.x_max == b.x_max && a.y_max == b.y_max) ? 1.0 : 0.0;
    }
    return inter / uni;
}

FrameMean miou(const BoxTrack& gen, const BoxTrack& target) {
    return frame_mean(gen, target, [](const Box& a, const Box& b) { return iou(a, b); });
}

double miou(std::span<const Box> gen, std::span<const Box> target) { return miou(present(gen), present(target)).value; }

FrameMean centroid_distance(const BoxTrack& gen, const BoxTrack& target, double frame_width, double frame_height) {
    if (!(frame_width > 0.0 && frame_height > 0.0)) throw DomainError("centroid_distance: frame size must be positive");
    const double diag = std::hypot(frame_width, frame_height);
    return frame_mean(gen, target, [diag](const Box& a, const Box& b) {
        const Vec2 ca = a.centroid(), cb = b.centroid();
        return std::hypot(ca.x - cb.x, ca.y - cb.y) / diag;
    });
}

double centroid_distance(std::span<const Box> gen, std::span<const Box> target, double frame_width, double frame_height) {
    return centroid_distance(present(gen), present(target), frame_width, frame_height).value;
}

BoxTrack boxes_from_masks(std::span<const ObjectMask> masks) {
    BoxTrack out;
    out.reserve(masks.size());
    for (const auto& m : masks) {
        if (m.area() == 0) {
            out.emplace_back(std::nullopt);
            continue;
        }
        const PixelBounds b = mask_bounds(m);
        out.emplace_back(Box{static_cast<double>(b.x0), static_cast<double>(b.y0), static_cast<double>(b.x1),
                             static_cast<double>(b.y1), m.frame});
    }
    return out;
}

ObjectMask mask_from_box(const Box& box, std::size_t width, std::size_t height) {
    ObjectMask m(width, height, box.frame);
    const auto lo = [](double v, std::size_t n) { return static_cast<std::size_t>(std::clamp(std::ceil(v), 0.0, static_cast<double>(n))); };
    const auto hi = [](double v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp(std::floor(v) + 1.0, 0.0, static_cast<double>(n)));
    };
    for (std::size_t y = lo(box.y_min, height); y < hi(box.y_max, height); ++y) {
        for (std::size_t x = lo(box.x_min, width); x < hi(box.x_max, width); ++x) m.set(x, y, true);
    }
    return m;
}

EmbeddingSequence::EmbeddingSequence(std::vector<std::vector<double>> vectors, std::string source)
    : vectors_(std::move(vectors)), source_(std::move(source)) {
    if (vectors_.empty()) throw DomainError("embedding sequence is empty");
    const std::size_t d = vectors_.front().size();
    if (d == 0) throw DomainError("embedding dimension must be >= 1");
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
        if (vectors_[i].size() != d) {
            throw DimensionError(fmt::format("embedding {} has dimension {}, expected {}", i, vectors_[i].size(), d));
        }
        if (!(norm(vectors_[i]) > 0.0)) throw DomainError(fmt::format("embedding {} has zero norm", i));
    }
}

EmbeddingSequence EmbeddingSequence::from_tensor(const Tensor& t, std::string source) {
    if (t.rank() != 1 && t.rank() != 2) {
        throw DimensionError(fmt::format("embedding tensor must be [T, D] or [D], got {}", to_string(t.shape())));
    }
    const std::size_t rows = t.rank() == 2 ? t.extent(0) : 1;
    const std::size_t d = t.shape().back();
    std::vector<std::vector<double>> v(rows, std::vector<double>(d));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < d; ++k) v[r][k] = t[r * d + k];
    }
    return EmbeddingSequence(std::move(v), std::move(source));
}

std::vector<double> EmbeddingSequence::mean() const {
    std::vector<double> m(dim(), 0.0);
    for (const auto& v : vectors_) {
        for (std::size_t k = 0; k < m.size(); ++k) m[k] += v[k];
    }
    for (double& x : m) x /= static_cast<double>(vectors_.size());
    return m;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError(fmt::format("cosine: dimensions {} and {} differ", a.size(), b.size()));
    const double na = norm(a), nb = norm(b);
    if (!(na > 0.0 && nb > 0.0)) throw DomainError("cosine: zero-norm vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double temporal_consistency(const EmbeddingSequence& frames) {
    if (frames.size() < 2) throw DomainError("temporal_consistency needs at least two frames");
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < frames.size(); ++t) sum += cosine(frames[t], frames[t + 1]);
    return sum / static_cast<double>(frames.size() - 1);
}

double region_similarity(std::span<const double> reference, const EmbeddingSequence& regions) {
    if (reference.size() != regions.dim()) {
        throw DimensionError(fmt::format("region_similarity: reference dimension {} vs regions {}", reference.size(), regions.dim()));
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < regions.size(); ++t) sum += cosine(reference, regions[t]);
    return sum / static_cast<double>(regions.size());
}

double text_alignment(std::span<const double> text, const EmbeddingSequence& frames) {
    const auto avg = frames.mean();
    return cosine(text, avg);
}

std::vector<std::optional<Tensor>> crop_regions(const Tensor& frames, const BoxTrack& boxes) {
    require_rank(frames, 4, "crop_regions frames");
    if (boxes.size() != frames.extent(0)) throw DimensionError("crop_regions: one box per frame required");
    const std::size_t c = frames.extent(1), h = frames.extent(2), w = frames.extent(3);
    std::vector<std::optional<Tensor>> out;
    for (std::size_t t = 0; t < boxes.size(); ++t) {
        if (!boxes[t]) {
            out.emplace_back(std::nullopt);
            continue;
        }
        const Box& b = *boxes[t];
        const auto clampi = [](double v, std::size_t n) {
            return static_cast<std::size_t>(std::clamp(std::round(v), 0.0, static_cast<double>(n - 1)));
        };
        const std::size_t x0 = clampi(b.x_min, w), x1 = clampi(b.x_max, w), y0 = clampi(b.y_min, h), y1 = clampi(b.y_max, h);
        Tensor crop({c, y1 - y0 + 1, x1 - x0 + 1});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = y0; y <= y1; ++y) {
                for (std::size_t x = x0; x <= x1; ++x) crop.at(ch, y - y0, x - x0) = frames.at(t, ch, y, x);
            }
        }
        out.emplace_back(std::move(crop));
    }
    return out;
}

EmbeddingSequence builtin_embedding(const Tensor& frames) {
    require_rank(frames, 4, "builtin_embedding frames");
    constexpr std::size_t kGrid = 8;
    const std::size_t t_count = frames.extent(0), c = frames.extent(1), h = frames.extent(2), w = frames.extent(3);
    std::vector<std::vector<double>> out(t_count, std::vector<double>(kGrid * kGrid, 0.0));
    for (std::size_t t = 0; t < t_count; ++t) {
        for (std::size_t gy = 0; gy < kGrid; ++gy) {
            const std::size_t ya = gy * h / kGrid, yb = std::max(ya + 1, (gy + 1) * h / kGrid);
            for (std::size_t gx = 0; gx < kGrid; ++gx) {
                const std::size_t xa = gx * w / kGrid, xb = std::max(xa + 1, (gx + 1) * w / kGrid);
                double s = 0.0;
                std::size_t n = 0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t y = ya; y < std::min(yb, h); ++y) {
                        for (std::size_t x = xa; x < std::min(xb, w); ++x) {
                            s += frames.at(t, ch, y, x);
                            ++n;
                        }
                    }
                }
                out[t][gy * kGrid + gx] = n ? s / static_cast<double>(n) : 0.0;
            }
        }
    }
    return EmbeddingSequence(std::move(out), kBuiltinEmbeddingTag);
}

}  // namespace trajforge::metrics

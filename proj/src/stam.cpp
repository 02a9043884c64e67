#include "trajforge/stam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "trajforge/error.hpp"

namespace trajforge {

namespace {

Trajectory at_canvas_length(const Trajectory& traj, const Canvas& canvas) {
    return traj.size() == canvas.frames ? traj : resample_trajectory(traj, canvas.frames);
}

void check_canvas(const Canvas& canvas) {
    if (canvas.frames == 0 || canvas.height == 0 || canvas.width == 0) throw DimensionError("canvas extents must be >= 1");
}

// Entry indices in id order, so that sums do not depend on list order.
std::vector<std::size_t> id_order(const CompositionLayout& layout) {
    std::vector<std::size_t> order(layout.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return layout.entries[a].reference_id < layout.entries[b].reference_id;
    });
    return order;
}

std::optional<std::size_t> index_of(const CompositionLayout& layout, std::string_view id) {
    for (std::size_t i = 0; i < layout.entries.size(); ++i) {
        if (layout.entries[i].reference_id == id) return i;
    }
    return std::nullopt;
}

void require_no_foreground_conflict(const CompositionLayout& layout) {
    const LayoutReport report = validate_layout(layout);
    if (!report.ok()) {
        const auto& [a, b] = report.foreground_conflicts.front();
        throw DomainError(fmt::format("entries '{}' and '{}' overlap and are both foreground", a, b));
    }
}

// Accumulates (optionally gated) branch sums. `features[i]` may be null for
// mask-only composition.
struct Accumulator {
    Canvas canvas;
    std::size_t channels;
    std::vector<double> z;
    std::vector<double> m_image;
    std::vector<double> m_video;

    Accumulator(const Canvas& c, std::size_t ch)
        : canvas(c), channels(ch), z(ch ? c.frames * ch * c.height * c.width : 0), m_image(c.frames * c.height * c.width),
          m_video(c.frames * c.height * c.width) {}

    void add(Modality modality, const Tensor* warped, const Tensor& mask, const Tensor* gate_mask) {
        const std::size_t plane = canvas.height * canvas.width;
        auto& m_acc = modality == Modality::image ? m_image : m_video;
        for (std::size_t t = 0; t < canvas.frames; ++t) {
            for (std::size_t k = 0; k < plane; ++k) {
                const std::size_t mi = t * plane + k;
                double m = mask[mi];
                if (gate_mask) m *= 1.0 - static_cast<double>((*gate_mask)[mi]);
                if (m == 0.0) continue;
                m_acc[mi] += m;
                if (!warped) continue;
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t zi = (t * channels + c) * plane + k;
                    z[zi] += static_cast<double>((*warped)[zi]) * m;
                }
            }
        }
    }

    Tensor mask4() const {
        const std::size_t plane = canvas.height * canvas.width;
        Tensor out({canvas.frames, 4, canvas.height, canvas.width});
        for (std::size_t t = 0; t < canvas.frames; ++t) {
            for (std::size_t k = 0; k < plane; ++k) {
                const std::size_t mi = t * plane + k;
                const float a = static_cast<float>(std::clamp(m_image[mi], 0.0, 1.0));
                const float b = static_cast<float>(std::clamp(m_video[mi], 0.0, 1.0));
                const float u = std::clamp(a + b, 0.0f, 1.0f);
                out[(t * 4 + 0) * plane + k] = a;
                out[(t * 4 + 1) * plane + k] = b;
                out[(t * 4 + 2) * plane + k] = u;
                out[(t * 4 + 3) * plane + k] = u;
            }
        }
        return out;
    }

    Tensor z_cond() const {
        Tensor out({canvas.frames, channels, canvas.height, canvas.width});
        for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<float>(z[i]);
        return out;
    }
};

ConditioningBundle compose_impl(const CompositionLayout& layout, const ReferenceMap& refs, std::size_t channels,
                                std::optional<std::string_view> fg_id, const MaskSoftening& soft) {
    check_canvas(layout.canvas);
    if (channels == 0) throw DimensionError("compose: channel count must be >= 1");
    require_no_foreground_conflict(layout);

    std::vector<Placement> placed(layout.entries.size());
    for (std::size_t i = 0; i < layout.entries.size(); ++i) {
        const auto& e = layout.entries[i];
        auto it = refs.find(e.reference_id);
        if (it == refs.end()) throw DomainError(fmt::format("compose: no reference for entry '{}'", e.reference_id));
        if (it->second.modality() != e.modality) {
            throw DomainError(fmt::format("compose: entry '{}' is {} but its reference is {}", e.reference_id,
                                          to_string(e.modality), to_string(it->second.modality())));
        }
        placed[i] = place_reference(it->second, e.trajectory, layout.canvas, channels, soft);
    }

    const Tensor* gate = nullptr;
    std::optional<std::size_t> fg;
    if (fg_id) {
        fg = index_of(layout, *fg_id);
        if (!fg) throw DomainError(fmt::format("priority gate: unknown entry '{}'", *fg_id));
        gate = &placed[*fg].soft_mask;
    }

    Accumulator acc(layout.canvas, channels);
    for (std::size_t i : id_order(layout)) {
        const bool gated = gate && i != *fg;
        acc.add(layout.entries[i].modality, &placed[i].warped, placed[i].soft_mask, gated ? gate : nullptr);
    }
    return {acc.z_cond(), acc.mask4(), Tensor{}};
}

}  // namespace

Reference::Reference(std::string id, Modality modality, Tensor features)
    : id_(std::move(id)), modality_(modality), features_(std::move(features)) {
    const std::size_t want = modality_ == Modality::image ? 3 : 4;
    if (features_.rank() != want) {
        throw DomainError(fmt::format("reference '{}': {} features must have rank {}, got {}", id_, to_string(modality_), want,
                                      to_string(features_.shape())));
    }
}

SamplingGrid build_grid(const Trajectory& traj, const Canvas& canvas) {
    check_canvas(canvas);
    if (traj.size() != canvas.frames) {
        throw DimensionError(fmt::format("build_grid: trajectory has {} anchors, canvas {} frames", traj.size(), canvas.frames));
    }
    Tensor g({canvas.frames, canvas.height, canvas.width, 2});
    for (std::size_t t = 0; t < canvas.frames; ++t) {
        const auto& a = traj[t];
        for (std::size_t y = 0; y < canvas.height; ++y) {
            const double uy = (static_cast<double>(y) + 0.5) / static_cast<double>(canvas.height);
            for (std::size_t x = 0; x < canvas.width; ++x) {
                const double ux = (static_cast<double>(x) + 0.5) / static_cast<double>(canvas.width);
                float gx = kOffCanvas, gy = kOffCanvas;
                if (a.visible) {
                    gx = static_cast<float>((ux - a.p.x) / (a.s.x + kGridEpsilon));
                    gy = static_cast<float>((uy - a.p.y) / (a.s.y + kGridEpsilon));
                }
                g.at(t, y, x, 0) = gx;
                g.at(t, y, x, 1) = gy;
            }
        }
    }
    return SamplingGrid(std::move(g));
}

CellBox anchor_box(const TrajectoryAnchor& a, const Canvas& canvas) {
    const double w = static_cast<double>(canvas.width), h = static_cast<double>(canvas.height);
    return {(a.p.x - 0.5 * a.s.x) * w, (a.p.y - 0.5 * a.s.y) * h, (a.p.x + 0.5 * a.s.x) * w, (a.p.y + 0.5 * a.s.y) * h};
}

Tensor soft_box_mask(const Trajectory& traj_in, const Canvas& canvas, const MaskSoftening& soft) {
    check_canvas(canvas);
    const Trajectory traj = at_canvas_length(traj_in, canvas);
    const double radius = soft.truncate * soft.sigma;
    const double inv_two_var = soft.sigma > 0.0 ? 1.0 / (2.0 * soft.sigma * soft.sigma) : 0.0;
    Tensor out({canvas.frames, 1, canvas.height, canvas.width});
    for (std::size_t t = 0; t < canvas.frames; ++t) {
        const auto& a = traj[t];
        if (!a.visible) continue;
        const CellBox box = anchor_box(a, canvas);
        for (std::size_t y = 0; y < canvas.height; ++y) {
            const double cy = static_cast<double>(y) + 0.5;
            const double dy = std::max({box.y0 - cy, 0.0, cy - box.y1});
            for (std::size_t x = 0; x < canvas.width; ++x) {
                const double cx = static_cast<double>(x) + 0.5;
                const double dx = std::max({box.x0 - cx, 0.0, cx - box.x1});
                const double d2 = dx * dx + dy * dy;
                float m = 0.0f;
                if (d2 == 0.0) {
                    m = 1.0f;
                } else if (soft.sigma > 0.0 && d2 <= radius * radius) {
                    m = static_cast<float>(std::exp(-d2 * inv_two_var));
                }
                out.at(t, 0, y, x) = m;
            }
        }
    }
    return out;
}

Placement place_reference(const Reference& ref, const Trajectory& traj_in, const Canvas& canvas, std::size_t channels,
                          const MaskSoftening& soft) {
    check_canvas(canvas);
    if (ref.channels() != channels) {
        throw DomainError(fmt::format("reference '{}' has {} channels, canvas expects {}", ref.id(), ref.channels(), channels));
    }
    const Trajectory traj = at_canvas_length(traj_in, canvas);
    const SamplingGrid grid = build_grid(traj, canvas);
    Tensor warped = ref.modality() == Modality::image
                        ? grid_sample(ref.features(), grid)
                        : grid_sample_frames(temporal_resample(ref.features(), canvas.frames), grid);
    return {std::move(warped), soft_box_mask(traj, canvas, soft)};
}

ConditioningBundle compose(const CompositionLayout& layout, const ReferenceMap& refs, std::size_t channels,
                           const MaskSoftening& soft) {
    return compose_impl(layout, refs, channels, std::nullopt, soft);
}

ConditioningBundle apply_priority_gate(const ConditioningBundle& bundle, std::string_view fg_entry_id,
                                       const CompositionLayout& layout, const ReferenceMap& refs, const MaskSoftening& soft) {
    require_rank(bundle.z_cond, 4, "gated bundle z_cond");
    if (!index_of(layout, fg_entry_id)) throw DomainError(fmt::format("priority gate: unknown entry '{}'", fg_entry_id));
    ConditioningBundle out = compose_impl(layout, refs, bundle.z_cond.extent(1), fg_entry_id, soft);
    if (out.z_cond.shape() != bundle.z_cond.shape() || out.mask4.shape() != bundle.mask4.shape()) {
        throw DimensionError("priority gate: bundle does not match the layout canvas");
    }
    if (!bundle.x_in.empty()) {
        out.x_in = assemble_input(slice_channels(bundle.x_in, 0, bundle.z_cond.extent(1)), out);
    }
    return out;
}

Tensor compose_masks(const CompositionLayout& layout, std::optional<std::string_view> fg_entry_id, const MaskSoftening& soft) {
    check_canvas(layout.canvas);
    require_no_foreground_conflict(layout);
    std::vector<Tensor> masks;
    masks.reserve(layout.entries.size());
    for (const auto& e : layout.entries) masks.push_back(soft_box_mask(e.trajectory, layout.canvas, soft));
    const Tensor* gate = nullptr;
    std::optional<std::size_t> fg;
    if (fg_entry_id) {
        fg = index_of(layout, *fg_entry_id);
        if (!fg) throw DomainError(fmt::format("priority gate: unknown entry '{}'", *fg_entry_id));
        gate = &masks[*fg];
    }
    Accumulator acc(layout.canvas, 0);
    for (std::size_t i : id_order(layout)) {
        const bool gated = gate && i != *fg;
        acc.add(layout.entries[i].modality, nullptr, masks[i], gated ? gate : nullptr);
    }
    return acc.mask4();
}

Tensor assemble_input(const Tensor& z_noisy, const Tensor& mask4, const Tensor& z_cond) {
    require_rank(z_noisy, 4, "assemble_input z_t");
    require_rank(mask4, 4, "assemble_input mask");
    require_rank(z_cond, 4, "assemble_input z_cond");
    if (mask4.extent(1) != 4) throw DimensionError("assemble_input: mask must have 4 channels");
    if (z_noisy.extent(1) != z_cond.extent(1)) {
        throw DimensionError(fmt::format("assemble_input: z_t has {} channels, z_cond {}", z_noisy.extent(1), z_cond.extent(1)));
    }
    return concat_channels({z_noisy, mask4, z_cond});
}

Tensor assemble_input(const Tensor& z_noisy, const ConditioningBundle& bundle) {
    return assemble_input(z_noisy, bundle.mask4, bundle.z_cond);
}

LayoutReport validate_layout(const CompositionLayout& layout) {
    check_canvas(layout.canvas);
    const Canvas& cv = layout.canvas;
    const std::size_t n = layout.entries.size();
    std::vector<Trajectory> trajs;
    trajs.reserve(n);
    for (const auto& e : layout.entries) trajs.push_back(at_canvas_length(e.trajectory, cv));

    LayoutReport report;
    report.ungated_overlap_cells.assign(cv.frames, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            EntryOverlap ov{layout.entries[i].reference_id, layout.entries[j].reference_id, {}, false};
            for (std::size_t t = 0; t < cv.frames; ++t) {
                if (!trajs[i][t].visible || !trajs[j][t].visible) continue;
                const CellBox a = anchor_box(trajs[i][t], cv), b = anchor_box(trajs[j][t], cv);
                if (std::min(a.x1, b.x1) > std::max(a.x0, b.x0) && std::min(a.y1, b.y1) > std::max(a.y0, b.y0)) {
                    ov.frames.push_back(t);
                }
            }
            if (ov.frames.empty()) continue;
            const bool fa = layout.entries[i].priority == Priority::foreground;
            const bool fb = layout.entries[j].priority == Priority::foreground;
            ov.gated = fa != fb;
            if (fa && fb) report.foreground_conflicts.emplace_back(ov.a, ov.b);
            report.overlaps.push_back(std::move(ov));
        }
    }

    if (report.overlaps.empty()) return report;
    for (std::size_t t = 0; t < cv.frames; ++t) {
        for (std::size_t y = 0; y < cv.height; ++y) {
            const double cy = static_cast<double>(y) + 0.5;
            for (std::size_t x = 0; x < cv.width; ++x) {
                const double cx = static_cast<double>(x) + 0.5;
                std::size_t covering = 0;
                bool any_fg = false;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!trajs[i][t].visible) continue;
                    const CellBox b = anchor_box(trajs[i][t], cv);
                    if (cx >= b.x0 && cx < b.x1 && cy >= b.y0 && cy < b.y1) {
                        ++covering;
                        any_fg = any_fg || layout.entries[i].priority == Priority::foreground;
                    }
                }
                if (covering >= 2 && !any_fg) ++report.ungated_overlap_cells[t];
            }
        }
    }
    return report;
}

}  // namespace trajforge

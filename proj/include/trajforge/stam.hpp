#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajforge/layout.hpp"
#include "trajforge/tensor.hpp"
#include "trajforge/trajectory.hpp"

namespace trajforge {

inline constexpr double kGridEpsilon = 1e-6;
/// Grid value written for invisible frames; far outside [-0.5, 0.5].
inline constexpr float kOffCanvas = 10.0f;

/// Edge feathering of placement masks, in canvas cells.
struct MaskSoftening {
    double sigma = 0.5;
    double truncate = 3.0;  // in multiples of sigma
};

/// Reference features: [C, h, w] for images, [Ts, C, h, w] for videos.
class Reference {
public:
    Reference(std::string id, Modality modality, Tensor features);

    const std::string& id() const noexcept { return id_; }
    Modality modality() const noexcept { return modality_; }
    const Tensor& features() const noexcept { return features_; }
    std::size_t channels() const noexcept { return features_.extent(modality_ == Modality::image ? 0 : 1); }

private:
    std::string id_;
    Modality modality_;
    Tensor features_;
};

using ReferenceMap = std::map<std::string, Reference, std::less<>>;

/// z_cond [T, C, H, W], mask4 [T, 4, H, W] = [M_image, M_video, M_union, M_union],
/// and, once assembled, x_in [T, 2C + 4, H, W].
struct ConditioningBundle {
    Tensor z_cond;
    Tensor mask4;
    Tensor x_in;
};

/// Inverse-warp grid for a trajectory already at canvas length:
/// grid(u) = (u - p_t) / (s_t + eps) per axis, u the cell center in [0,1]^2.
SamplingGrid build_grid(const Trajectory& traj, const Canvas& canvas);

/// [T, 1, H, W] box mask: 1 inside [p_t - s_t/2, p_t + s_t/2], Gaussian falloff
/// outside, zero past the truncation radius and on invisible frames.
Tensor soft_box_mask(const Trajectory& traj, const Canvas& canvas, const MaskSoftening& soft = {});

struct Placement {
    Tensor warped;     // [T, C, H, W]
    Tensor soft_mask;  // [T, 1, H, W]
};

/// Aligns features in time (broadcast for images, resampling for videos) and
/// inverse-warps them onto the canvas along `traj`.
Placement place_reference(const Reference& ref, const Trajectory& traj, const Canvas& canvas, std::size_t channels,
                          const MaskSoftening& soft = {});

/// Sums image and video branches of every entry into z_cond and mask4.
/// `channels` is the latent channel count; every reference must match it.
ConditioningBundle compose(const CompositionLayout& layout, const ReferenceMap& refs, std::size_t channels,
                           const MaskSoftening& soft = {});

/// Recomposes with every non-foreground contribution (features and masks)
/// multiplied by 1 - M_fg. `bundle` only fixes the expected shapes.
ConditioningBundle apply_priority_gate(const ConditioningBundle& bundle, std::string_view fg_entry_id,
                                       const CompositionLayout& layout, const ReferenceMap& refs,
                                       const MaskSoftening& soft = {});

/// Mask channels only; needs no reference features.
Tensor compose_masks(const CompositionLayout& layout, std::optional<std::string_view> fg_entry_id = std::nullopt,
                     const MaskSoftening& soft = {});

/// x_in = [z_t, mask4, z_cond] along channels.
Tensor assemble_input(const Tensor& z_noisy, const ConditioningBundle& bundle);
Tensor assemble_input(const Tensor& z_noisy, const Tensor& mask4, const Tensor& z_cond);

/// Hard box of an anchor in canvas cell units, [x0, x1) x [y0, y1).
struct CellBox {
    double x0, y0, x1, y1;
};
CellBox anchor_box(const TrajectoryAnchor& a, const Canvas& canvas);

struct EntryOverlap {
    std::string a;
    std::string b;
    std::vector<std::size_t> frames;
    bool gated = false;  // one side is foreground
};

struct LayoutReport {
    std::vector<EntryOverlap> overlaps;
    /// Pairs that overlap while both claim foreground.
    std::vector<std::pair<std::string, std::string>> foreground_conflicts;
    /// Per frame, cells covered by two or more boxes of which none is foreground.
    std::vector<std::size_t> ungated_overlap_cells;

    bool ok() const noexcept { return foreground_conflicts.empty(); }
};

/// Overlap analysis at canvas resolution (trajectories resampled to canvas T).
LayoutReport validate_layout(const CompositionLayout& layout);

}  // namespace trajforge

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trajforge/layout.hpp"
#include "trajforge/tensor.hpp"
#include "trajforge/trajectory.hpp"

namespace trajforge {

struct CropSize {
    std::size_t height = 64;
    std::size_t width = 64;
};

/// Resamples, per frame, the axis-aligned window centered at p_t with extent
/// s_t * (W, H) out of `frames` [T, C, H, W] into a [T, C, h, w] clip.
/// Invisible frames come out as zeros, as do window parts outside the frame.
Tensor crop_reference(const Tensor& frames, const Trajectory& traj, CropSize out_size = {});

struct ObjectInput {
    ObjectMask mask_at_ref;
    PointTracks tracks;
};

struct DecomposeOptions {
    Canvas canvas{};
    CropSize crop{};
    std::string caption;
};

struct Decomposition {
    CompositionLayout layout;
    /// One [T, C, h, w] crop per layout entry, same order.
    std::vector<Tensor> references;
};

/// Video -> (layout, reference crops). Entries are named obj0, obj1, ... in
/// input order, all with video modality and no priority.
Decomposition decompose(const Tensor& frames, const std::vector<ObjectInput>& objects, const DecomposeOptions& options = {});

/// Parallel-list form; throws DomainError when the lists differ in length.
Decomposition decompose(const Tensor& frames, const std::vector<ObjectMask>& masks, const std::vector<PointTracks>& tracks,
                        const DecomposeOptions& options = {});

}  // namespace trajforge

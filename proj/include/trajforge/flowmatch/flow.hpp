#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "trajforge/flowmatch/micro_denoiser.hpp"
#include "trajforge/tensor.hpp"

namespace trajforge::fm {

/// One point on the straight path from noise z0 to data z1.
struct FlowSample {
    Tensor z0;
    Tensor z1;
    float t = 0.0f;
    Tensor z_t;       // t z1 + (1 - t) z0
    Tensor v_target;  // z1 - z0
};

/// Throws DimensionError on shape mismatch, DomainError for t outside [0, 1].
FlowSample make_flow_sample(const Tensor& z1, const Tensor& z0, float t);

/// What the denoiser sees besides z_t.
struct Condition {
    Tensor mask4;   // [T, 4, H, W]
    Tensor z_cond;  // [T, C, H, W]
    TextTokens text;
};

/// Same condition with z_cond and mask4 zeroed (the unconditioned ablation).
Condition without_layout(const Condition& c);

using VelocityField = std::function<Tensor(const Tensor& z_t, float t, const Condition& cond)>;

/// Wraps a denoiser: assembles x_in = [z_t, mask4, z_cond] and predicts v.
VelocityField velocity_field(const MicroDenoiser<float>& model);

/// Mean of squared element differences, accumulated in double.
double mse(const Tensor& a, const Tensor& b);

/// Mean squared error between v_target and the model's velocity at z_t.
double fm_loss(const VelocityField& model, const FlowSample& sample, const Condition& cond);

/// Standard normal tensor from a seeded generator.
Tensor gaussian(const Shape& shape, std::mt19937_64& rng);

/// Fixed-step Euler integration of the velocity field from t = 0 to 1,
/// starting at z0 ~ N(0, I) drawn from `seed`.
Tensor euler_sample(const VelocityField& model, const Condition& cond, const Shape& latent_shape, std::size_t steps,
                    std::uint64_t seed);

}  // namespace trajforge::fm

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "trajforge/flowmatch/micro_denoiser.hpp"

namespace trajforge::fm {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay and bias correction. Moment buffers are
/// created on the first step, one per parameter group.
class AdamW {
public:
    explicit AdamW(AdamWConfig config = {}) : config_(config) {}

    void step(const std::vector<std::span<float>>& params, const std::vector<std::span<const float>>& grads, double lr);
    void step(DenoiserParams<float>& params, const DenoiserParams<float>& grads, double lr);

    std::size_t steps_taken() const noexcept { return t_; }
    const AdamWConfig& config() const noexcept { return config_; }

private:
    AdamWConfig config_;
    std::size_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

/// Scales `grads` so that their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(DenoiserParams<float>& grads, double max_norm);

}  // namespace trajforge::fm

#include "trajforge/flowmatch/optimizer.hpp"

#include <cmath>

#include "trajforge/error.hpp"

namespace trajforge::fm {

void AdamW::step(const std::vector<std::span<float>>& params, const std::vector<std::span<const float>>& grads, double lr) {
    if (params.size() != grads.size()) throw DimensionError("adamw: parameter and gradient group counts differ");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0f);
            v_.emplace_back(p.size(), 0.0f);
        }
    }
    if (m_.size() != params.size()) throw DimensionError("adamw: parameter groups changed between steps");
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double decay = 1.0 - lr * config_.weight_decay;
    for (std::size_t g = 0; g < params.size(); ++g) {
        auto p = params[g];
        const auto d = grads[g];
        if (p.size() != d.size() || p.size() != m_[g].size()) throw DimensionError("adamw: group size mismatch");
        auto& m = m_[g];
        auto& v = v_[g];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = d[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            if (lr == 0.0) continue;
            const double update = (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
            p[i] = static_cast<float>(p[i] * decay - lr * update);
        }
    }
}

void AdamW::step(DenoiserParams<float>& params, const DenoiserParams<float>& grads, double lr) {
    std::vector<std::span<float>> ps;
    std::vector<std::span<const float>> gs;
    for (auto& [name, m] : params.named()) ps.emplace_back(m->data(), static_cast<std::size_t>(m->size()));
    for (const auto& [name, m] : grads.named()) gs.emplace_back(m->data(), static_cast<std::size_t>(m->size()));
    step(ps, gs, lr);
}

double clip_grad_norm(DenoiserParams<float>& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > max_norm) grads.scale(static_cast<float>(max_norm / (norm + 1e-6)));
    return norm;
}

}  // namespace trajforge::fm

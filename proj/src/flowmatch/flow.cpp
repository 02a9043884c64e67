#include "trajforge/flowmatch/flow.hpp"

#include <fmt/format.h>

#include "trajforge/error.hpp"
#include "trajforge/stam.hpp"

namespace trajforge::fm {

FlowSample make_flow_sample(const Tensor& z1, const Tensor& z0, float t) {
    if (z1.shape() != z0.shape()) {
        throw DimensionError(fmt::format("flow sample: z1 {} and z0 {} differ", to_string(z1.shape()), to_string(z0.shape())));
    }
    if (!(t >= 0.0f && t <= 1.0f)) throw DomainError(fmt::format("flow sample: t = {} outside [0, 1]", t));
    FlowSample s{z0, z1, t, Tensor(z1.shape()), Tensor(z1.shape())};
    const auto a = z1.data(), b = z0.data();
    auto zt = s.z_t.data(), v = s.v_target.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        zt[i] = t * a[i] + (1.0f - t) * b[i];
        v[i] = a[i] - b[i];
    }
    return s;
}

Condition without_layout(const Condition& c) {
    return {Tensor::zeros(c.mask4.shape()), Tensor::zeros(c.z_cond.shape()), c.text};
}

VelocityField velocity_field(const MicroDenoiser<float>& model) {
    return [&model](const Tensor& z_t, float t, const Condition& cond) {
        return model.velocity(assemble_input(z_t, cond.mask4, cond.z_cond), t, cond.text);
    };
}

double mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError(fmt::format("mse: {} vs {}", to_string(a.shape()), to_string(b.shape())));
    double s = 0.0;
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        s += d * d;
    }
    return s / static_cast<double>(x.size());
}

double fm_loss(const VelocityField& model, const FlowSample& sample, const Condition& cond) {
    return mse(model(sample.z_t, sample.t, cond), sample.v_target);
}

Tensor gaussian(const Shape& shape, std::mt19937_64& rng) {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    Tensor out(shape);
    for (float& x : out.data()) x = nd(rng);
    return out;
}

Tensor euler_sample(const VelocityField& model, const Condition& cond, const Shape& latent_shape, std::size_t steps,
                    std::uint64_t seed) {
    if (steps == 0) throw DomainError("euler_sample: steps must be >= 1");
    std::mt19937_64 rng(seed);
    Tensor z = gaussian(latent_shape, rng);
    const float dt = 1.0f / static_cast<float>(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const float t = static_cast<float>(i) / static_cast<float>(steps);
        const Tensor v = model(z, t, cond);
        if (v.shape() != z.shape()) throw DimensionError("euler_sample: velocity shape differs from the latent");
        auto zd = z.data();
        const auto vd = v.data();
        for (std::size_t k = 0; k < zd.size(); ++k) zd[k] += dt * vd[k];
    }
    return z;
}

}  // namespace trajforge::fm

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "trajforge/flowmatch/micro_denoiser.hpp"

namespace trajforge::fixtures {

struct GroupError {
    std::string name;
    double max_grad = 0.0;
    double rel_error = 0.0;
};

/// A double-precision model small enough for exhaustive central differences.
inline fm::DenoiserConfig gradcheck_config() {
    fm::DenoiserConfig c;
    c.frames = 2;
    c.channels = 2;
    c.height = 4;
    c.width = 4;
    c.patch = 2;
    c.dim = 8;
    c.heads = 2;
    c.blocks = 2;
    c.text_vocab = 8;
    c.text_tokens = 4;
    c.zero_init = false;
    return c;
}

/// Central differences of L = <w, f(x)> against the analytic backward pass,
/// for every parameter. Per group, the error is max |analytic - numeric| over
/// the group's largest gradient magnitude; key biases have an exactly zero
/// gradient (softmax ignores a per-row shift), hence the floor.
inline std::vector<GroupError> gradient_check(fm::MicroDenoiser<double>& model, double h = 1e-5, std::uint64_t seed = 1) {
    using fm::Mat;
    const auto& c = model.config();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Mat<double> x(c.tokens(), c.token_in()), w(c.tokens(), c.token_out());
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);
    fm::TextTokens text(c.text_tokens, 0);
    for (std::size_t i = 0; i + 1 < text.size(); ++i) text[i] = static_cast<int>(1 + i % (c.text_vocab - 1));
    const double t = 0.37;
    const auto loss = [&] { return (model.forward(x, t, text).array() * w.array()).sum(); };

    fm::ForwardCache<double> cache;
    model.forward(x, t, text, &cache);
    auto grads = model.params().zeros_like();
    model.backward(cache, w, grads);

    std::vector<GroupError> out;
    auto params = model.params().named();
    const auto analytic = grads.named();
    for (std::size_t g = 0; g < params.size(); ++g) {
        Mat<double>& p = *params[g].second;
        const Mat<double>& a = *analytic[g].second;
        double max_a = 0.0, max_n = 0.0, max_e = 0.0;
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            const double orig = p.data()[j];
            p.data()[j] = orig + h;
            const double lp = loss();
            p.data()[j] = orig - h;
            const double lm = loss();
            p.data()[j] = orig;
            const double num = (lp - lm) / (2 * h);
            max_a = std::max(max_a, std::abs(a.data()[j]));
            max_n = std::max(max_n, std::abs(num));
            max_e = std::max(max_e, std::abs(a.data()[j] - num));
        }
        out.push_back({params[g].first, max_a, max_e / std::max({max_a, max_n, 1e-3})});
    }
    return out;
}

}  // namespace trajforge::fixtures

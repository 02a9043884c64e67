#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/flowmatch/attention.hpp"
#include "trajforge/tensor.hpp"

namespace trajforge::fm {

/// Shape of the denoiser and of the latent canvas it runs on.
struct DenoiserConfig {
    std::size_t frames = 8;
    std::size_t channels = 4;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t patch = 2;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t ff_mult = 4;
    std::size_t text_vocab = 64;
    std::size_t text_tokens = 8;
    /// Zero-initialize modulation and output layers (adaLN-Zero).
    bool zero_init = true;

    std::size_t in_channels() const noexcept { return 2 * channels + 4; }
    std::size_t tokens() const noexcept { return frames * height * width / (patch * patch); }
    std::size_t token_in() const noexcept { return in_channels() * patch * patch; }
    std::size_t token_out() const noexcept { return channels * patch * patch; }

    /// Throws DomainError on inconsistent extents.
    void validate() const;

    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

template <class S>
struct Linear {
    Mat<S> w;  // [in, out]
    Mat<S> b;  // [1, out]
};

template <class S>
struct AttentionParams {
    Linear<S> q, k, v, o;
};

template <class S>
struct BlockParams {
    Linear<S> modulation;  // condition -> 9 D: (shift, scale, gate) x (self, cross, ff)
    AttentionParams<S> self_attn;
    AttentionParams<S> cross_attn;
    Linear<S> ff_in;
    Linear<S> ff_out;
};

template <class S>
struct DenoiserParams {
    Linear<S> in_proj;
    Linear<S> time_in;
    Linear<S> time_out;
    Mat<S> text_table;  // [vocab, D]
    std::vector<BlockParams<S>> blocks;
    Linear<S> final_modulation;  // condition -> 2 D: (shift, scale)
    Linear<S> out_proj;

    /// Every parameter matrix with a stable dotted name, in a fixed order.
    std::vector<std::pair<std::string, Mat<S>*>> named();
    std::vector<std::pair<std::string, const Mat<S>*>> named() const;

    std::size_t count() const;
    void set_zero();
    /// Same shapes, all zeros.
    DenoiserParams zeros_like() const;
    void add(const DenoiserParams& other);
    void scale(S factor);
    double squared_norm() const;
};

/// Everything the backward pass needs from one forward pass.
template <class S>
struct ForwardCache;

/// Per-sample conditioning besides x_in: the hashed caption tokens.
using TextTokens = std::vector<int>;

/// Caption -> `count` token ids in [0, vocab): FNV-1a of each whitespace
/// word, id 0 reserved for padding.
TextTokens hash_caption(std::string_view caption, std::size_t vocab, std::size_t count);

/// Patch-token diffusion transformer: input projection of [z_t, M, z_cond]
/// patches, blocks of AdaLN-modulated self-attention, cross-attention over
/// caption embeddings and a GELU feed-forward, then a modulated output
/// projection back to per-patch velocities.
template <class S>
class MicroDenoiser {
public:
    MicroDenoiser(const DenoiserConfig& config, std::uint64_t seed);
    MicroDenoiser(const DenoiserConfig& config, DenoiserParams<S> params);

    const DenoiserConfig& config() const noexcept { return config_; }
    DenoiserParams<S>& params() noexcept { return params_; }
    const DenoiserParams<S>& params() const noexcept { return params_; }

    /// [T, Cin, H, W] (flat, row-major) -> [L, Cin s^2] tokens.
    Mat<S> patchify(std::span<const float> x, std::size_t channels) const;
    /// [L, C s^2] tokens -> [T, C, H, W].
    Tensor unpatchify(const Mat<S>& tokens) const;

    /// Token-level forward. Fills `cache` when given.
    Mat<S> forward(const Mat<S>& tokens, S t, const TextTokens& text, ForwardCache<S>* cache = nullptr) const;

    /// Accumulates parameter gradients of <d_out, output> into `grads`.
    void backward(const ForwardCache<S>& cache, const Mat<S>& d_out, DenoiserParams<S>& grads) const;

    /// Velocity for a noisy latent and its STAM condition (x_in = [z_t, mask4, z_cond]).
    Tensor velocity(const Tensor& x_in, float t, const TextTokens& text) const;

private:
    DenoiserConfig config_;
    DenoiserParams<S> params_;
    Mat<S> positions_;  // fixed sinusoidal (t, y, x) embedding, [L, D]
};

template <class S>
struct ForwardCache {
    struct SubLayer {
        Mat<S> z_in;
        Mat<S> normed;
        Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
        Mat<S> h;
        Mat<S> out;
        // attention
        Mat<S> q, k, v, heads_out;
        AttentionCache<S> attn;
        // feed-forward
        Mat<S> pre, act;
    };
    struct Block {
        Mat<S> mod;
        SubLayer sub[3];
    };

    Mat<S> tokens;
    Mat<S> time_features, time_pre, time_act, cond_pre, cond;
    Mat<S> context;
    TextTokens text;
    std::vector<Block> blocks;
    Mat<S> final_mod;
    Mat<S> final_normed;
    Eigen::Matrix<S, Eigen::Dynamic, 1> final_rstd;
    Mat<S> final_h;
};

/// Sinusoidal timestep features, [1, dim].
template <class S>
Mat<S> timestep_features(S t, std::size_t dim);

extern template class MicroDenoiser<float>;
extern template class MicroDenoiser<double>;
extern template struct DenoiserParams<float>;
extern template struct DenoiserParams<double>;

/// Float parameters converted to another scalar type.
template <class To, class From>
DenoiserParams<To> cast_params(const DenoiserParams<From>& p);

}  // namespace trajforge::fm

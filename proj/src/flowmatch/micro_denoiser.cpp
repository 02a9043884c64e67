#include "trajforge/flowmatch/micro_denoiser.hpp"

#include <cctype>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "trajforge/error.hpp"

namespace trajforge::fm {

namespace {

constexpr double kNormEps = 1e-6;

template <class S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

template <class S>
Mat<S> silu(const Mat<S>& x) {
    return x.unaryExpr([](S v) { return v * sigmoid(v); });
}

template <class S>
Mat<S> silu_grad(const Mat<S>& x) {
    return x.unaryExpr([](S v) {
        const S s = sigmoid(v);
        return s * (S(1) + v * (S(1) - s));
    });
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluC = 0.044715;

template <class S>
Mat<S> gelu(const Mat<S>& x) {
    return x.unaryExpr([](S v) {
        const S inner = S(kGeluK) * (v + S(kGeluC) * v * v * v);
        return S(0.5) * v * (S(1) + std::tanh(inner));
    });
}

template <class S>
Mat<S> gelu_grad(const Mat<S>& x) {
    return x.unaryExpr([](S v) {
        const S inner = S(kGeluK) * (v + S(kGeluC) * v * v * v);
        const S th = std::tanh(inner);
        return S(0.5) * (S(1) + th) + S(0.5) * v * (S(1) - th * th) * S(kGeluK) * (S(1) + S(3 * kGeluC) * v * v);
    });
}

template <class S>
Mat<S> affine(const Mat<S>& x, const Linear<S>& l) {
    Mat<S> y;
    y.noalias() = x * l.w;
    y.rowwise() += l.b.row(0);
    return y;
}

// Accumulates weight/bias gradients; writes the input gradient when asked.
template <class S>
void affine_backward(const Mat<S>& x, const Mat<S>& dy, const Linear<S>& p, Linear<S>& g, Mat<S>* dx) {
    g.w.noalias() += x.transpose() * dy;
    g.b += dy.colwise().sum();
    if (dx) dx->noalias() = dy * p.w.transpose();
}

template <class S>
void layer_norm(const Mat<S>& x, Mat<S>& n, ColVec<S>& rstd) {
    const Eigen::Index d = x.cols();
    n.resize(x.rows(), d);
    rstd.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mean = x.row(r).mean();
        const S var = (x.row(r).array() - mean).square().sum() / static_cast<S>(d);
        rstd(r) = S(1) / std::sqrt(var + S(kNormEps));
        n.row(r) = (x.row(r).array() - mean) * rstd(r);
    }
}

template <class S>
Mat<S> layer_norm_backward(const Mat<S>& dn, const Mat<S>& n, const ColVec<S>& rstd) {
    Mat<S> dx(dn.rows(), dn.cols());
    for (Eigen::Index r = 0; r < dn.rows(); ++r) {
        const S mean_dn = dn.row(r).mean();
        const S mean_dn_n = dn.row(r).dot(n.row(r)) / static_cast<S>(dn.cols());
        dx.row(r) = rstd(r) * (dn.row(r).array() - mean_dn - n.row(r).array() * mean_dn_n);
    }
    return dx;
}

// h = n * (1 + scale) + shift, row-broadcast of [1, D] vectors.
template <class S, class V>
Mat<S> modulate(const Mat<S>& n, const V& shift, const V& scale) {
    Mat<S> h = n;
    h.array().rowwise() *= (scale.row(0).array() + S(1));
    h.array().rowwise() += shift.row(0).array();
    return h;
}

template <class S>
void init_linear(Linear<S>& l, std::size_t in, std::size_t out, double w_std, double b_std, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    l.w.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
    l.b.resize(1, static_cast<Eigen::Index>(out));
    for (Eigen::Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = static_cast<S>(w_std * nd(rng));
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b.data()[i] = static_cast<S>(b_std * nd(rng));
}

template <class S>
Mat<S> position_table(const DenoiserConfig& c) {
    const std::size_t tp = c.frames, hp = c.height / c.patch, wp = c.width / c.patch;
    const std::size_t nf = c.dim / 6;
    Mat<S> pos = Mat<S>::Zero(static_cast<Eigen::Index>(tp * hp * wp), static_cast<Eigen::Index>(c.dim));
    for (std::size_t t = 0; t < tp; ++t) {
        for (std::size_t y = 0; y < hp; ++y) {
            for (std::size_t x = 0; x < wp; ++x) {
                const auto l = static_cast<Eigen::Index>((t * hp + y) * wp + x);
                const double coord[3] = {static_cast<double>(t), static_cast<double>(y), static_cast<double>(x)};
                for (std::size_t a = 0; a < 3; ++a) {
                    for (std::size_t k = 0; k < nf; ++k) {
                        const double w = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(nf));
                        const auto col = static_cast<Eigen::Index>(a * 2 * nf + 2 * k);
                        pos(l, col) = static_cast<S>(std::sin(coord[a] * w));
                        pos(l, col + 1) = static_cast<S>(std::cos(coord[a] * w));
                    }
                }
            }
        }
    }
    return pos;
}

template <class S>
void for_each_linear(const std::string& prefix, Linear<S>& l, std::vector<std::pair<std::string, Mat<S>*>>& out) {
    out.emplace_back(prefix + ".w", &l.w);
    out.emplace_back(prefix + ".b", &l.b);
}

}  // namespace

void DenoiserConfig::validate() const {
    if (frames == 0 || channels == 0 || height == 0 || width == 0 || patch == 0) throw DomainError("denoiser: zero extent");
    if (height % patch != 0 || width % patch != 0) {
        throw DomainError(fmt::format("denoiser: canvas {}x{} not divisible by patch {}", height, width, patch));
    }
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw DomainError(fmt::format("denoiser: dim {} not divisible by heads {}", dim, heads));
    }
    if (ff_mult == 0 || text_vocab < 2 || text_tokens == 0) throw DomainError("denoiser: invalid feed-forward/text settings");
}

nlohmann::json to_json(const DenoiserConfig& c) {
    return {{"frames", c.frames}, {"channels", c.channels}, {"height", c.height},         {"width", c.width},
            {"patch", c.patch},   {"dim", c.dim},           {"heads", c.heads},          {"blocks", c.blocks},
            {"ff_mult", c.ff_mult}, {"text_vocab", c.text_vocab}, {"text_tokens", c.text_tokens}, {"zero_init", c.zero_init}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    try {
        c.frames = j.value("frames", c.frames);
        c.channels = j.value("channels", c.channels);
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.patch = j.value("patch", c.patch);
        c.dim = j.value("dim", c.dim);
        c.heads = j.value("heads", c.heads);
        c.blocks = j.value("blocks", c.blocks);
        c.ff_mult = j.value("ff_mult", c.ff_mult);
        c.text_vocab = j.value("text_vocab", c.text_vocab);
        c.text_tokens = j.value("text_tokens", c.text_tokens);
        c.zero_init = j.value("zero_init", c.zero_init);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("model config: {}", e.what()));
    }
    c.validate();
    return c;
}

TextTokens hash_caption(std::string_view caption, std::size_t vocab, std::size_t count) {
    TextTokens out(count, 0);
    std::size_t n = 0, i = 0;
    while (n < count && i < caption.size()) {
        while (i < caption.size() && std::isspace(static_cast<unsigned char>(caption[i]))) ++i;
        if (i >= caption.size()) break;
        std::uint64_t h = 0xcbf29ce484222325ull;
        while (i < caption.size() && !std::isspace(static_cast<unsigned char>(caption[i]))) {
            h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(caption[i++])));
            h *= 0x100000001b3ull;
        }
        out[n++] = static_cast<int>(1 + h % (vocab - 1));
    }
    return out;
}

template <class S>
std::vector<std::pair<std::string, Mat<S>*>> DenoiserParams<S>::named() {
    std::vector<std::pair<std::string, Mat<S>*>> out;
    for_each_linear("in_proj", in_proj, out);
    for_each_linear("time_in", time_in, out);
    for_each_linear("time_out", time_out, out);
    out.emplace_back("text_table", &text_table);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string p = fmt::format("blocks.{}.", b);
        auto& blk = blocks[b];
        for_each_linear(p + "modulation", blk.modulation, out);
        for_each_linear(p + "self_attn.q", blk.self_attn.q, out);
        for_each_linear(p + "self_attn.k", blk.self_attn.k, out);
        for_each_linear(p + "self_attn.v", blk.self_attn.v, out);
        for_each_linear(p + "self_attn.o", blk.self_attn.o, out);
        for_each_linear(p + "cross_attn.q", blk.cross_attn.q, out);
        for_each_linear(p + "cross_attn.k", blk.cross_attn.k, out);
        for_each_linear(p + "cross_attn.v", blk.cross_attn.v, out);
        for_each_linear(p + "cross_attn.o", blk.cross_attn.o, out);
        for_each_linear(p + "ff_in", blk.ff_in, out);
        for_each_linear(p + "ff_out", blk.ff_out, out);
    }
    for_each_linear("final_modulation", final_modulation, out);
    for_each_linear("out_proj", out_proj, out);
    return out;
}

template <class S>
std::vector<std::pair<std::string, const Mat<S>*>> DenoiserParams<S>::named() const {
    auto mut = const_cast<DenoiserParams*>(this)->named();
    std::vector<std::pair<std::string, const Mat<S>*>> out;
    out.reserve(mut.size());
    for (auto& [n, m] : mut) out.emplace_back(std::move(n), m);
    return out;
}

template <class S>
std::size_t DenoiserParams<S>::count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : named()) n += static_cast<std::size_t>(m->size());
    return n;
}

template <class S>
void DenoiserParams<S>::set_zero() {
    for (auto& [name, m] : named()) m->setZero();
}

template <class S>
DenoiserParams<S> DenoiserParams<S>::zeros_like() const {
    DenoiserParams out = *this;
    out.set_zero();
    return out;
}

template <class S>
void DenoiserParams<S>::add(const DenoiserParams& other) {
    auto mine = named();
    auto theirs = other.named();
    for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].second += *theirs[i].second;
}

template <class S>
void DenoiserParams<S>::scale(S factor) {
    for (auto& [name, m] : named()) *m *= factor;
}

template <class S>
double DenoiserParams<S>::squared_norm() const {
    double s = 0.0;
    for (const auto& [name, m] : named()) {
        for (Eigen::Index i = 0; i < m->size(); ++i) s += static_cast<double>(m->data()[i]) * static_cast<double>(m->data()[i]);
    }
    return s;
}

template <class S>
Mat<S> timestep_features(S t, std::size_t dim) {
    Mat<S> f = Mat<S>::Zero(1, static_cast<Eigen::Index>(dim));
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double w = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        const double arg = 1000.0 * static_cast<double>(t) * w;
        f(0, static_cast<Eigen::Index>(k)) = static_cast<S>(std::sin(arg));
        f(0, static_cast<Eigen::Index>(half + k)) = static_cast<S>(std::cos(arg));
    }
    return f;
}

template <class S>
MicroDenoiser<S>::MicroDenoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = config_.dim, f = config_.dim * config_.ff_mult;
    const double inv_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double bias_std = config_.zero_init ? 0.0 : 0.1;
    const double gated_std = config_.zero_init ? 0.0 : 0.5 * inv_d;

    init_linear(params_.in_proj, config_.token_in(), d, 1.0 / std::sqrt(static_cast<double>(config_.token_in())), bias_std, rng);
    init_linear(params_.time_in, d, d, inv_d, bias_std, rng);
    init_linear(params_.time_out, d, d, inv_d, bias_std, rng);
    {
        std::normal_distribution<double> nd(0.0, 1.0);
        params_.text_table.resize(static_cast<Eigen::Index>(config_.text_vocab), static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < params_.text_table.size(); ++i) params_.text_table.data()[i] = static_cast<S>(0.5 * nd(rng));
    }
    params_.blocks.resize(config_.blocks);
    for (auto& blk : params_.blocks) {
        init_linear(blk.modulation, d, 9 * d, gated_std, bias_std, rng);
        for (auto* attn : {&blk.self_attn, &blk.cross_attn}) {
            init_linear(attn->q, d, d, inv_d, bias_std, rng);
            init_linear(attn->k, d, d, inv_d, bias_std, rng);
            init_linear(attn->v, d, d, inv_d, bias_std, rng);
            init_linear(attn->o, d, d, inv_d, bias_std, rng);
        }
        init_linear(blk.ff_in, d, f, inv_d, bias_std, rng);
        init_linear(blk.ff_out, f, d, 1.0 / std::sqrt(static_cast<double>(f)), bias_std, rng);
    }
    init_linear(params_.final_modulation, d, 2 * d, gated_std, bias_std, rng);
    init_linear(params_.out_proj, d, config_.token_out(), gated_std, bias_std, rng);
    positions_ = position_table<S>(config_);
}

template <class S>
MicroDenoiser<S>::MicroDenoiser(const DenoiserConfig& config, DenoiserParams<S> params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    const MicroDenoiser fresh(config_, 0);
    const auto reference = fresh.params().named();
    const auto mine = params_.named();
    if (reference.size() != mine.size()) throw DomainError("denoiser: parameter set does not match config");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].second->rows() != reference[i].second->rows() || mine[i].second->cols() != reference[i].second->cols()) {
            throw DomainError(fmt::format("denoiser: parameter {} has wrong shape", mine[i].first));
        }
    }
    positions_ = position_table<S>(config_);
}

template <class S>
Mat<S> MicroDenoiser<S>::patchify(std::span<const float> x, std::size_t channels) const {
    const std::size_t s = config_.patch, t_n = config_.frames, h = config_.height, w = config_.width;
    const std::size_t hp = h / s, wp = w / s;
    if (x.size() != t_n * channels * h * w) throw DimensionError("patchify: input size does not match the canvas");
    Mat<S> tokens(static_cast<Eigen::Index>(t_n * hp * wp), static_cast<Eigen::Index>(channels * s * s));
    for (std::size_t t = 0; t < t_n; ++t) {
        for (std::size_t py = 0; py < hp; ++py) {
            for (std::size_t px = 0; px < wp; ++px) {
                const auto l = static_cast<Eigen::Index>((t * hp + py) * wp + px);
                for (std::size_t c = 0; c < channels; ++c) {
                    for (std::size_t dy = 0; dy < s; ++dy) {
                        for (std::size_t dx = 0; dx < s; ++dx) {
                            tokens(l, static_cast<Eigen::Index>((c * s + dy) * s + dx)) =
                                static_cast<S>(x[((t * channels + c) * h + py * s + dy) * w + px * s + dx]);
                        }
                    }
                }
            }
        }
    }
    return tokens;
}

template <class S>
Tensor MicroDenoiser<S>::unpatchify(const Mat<S>& tokens) const {
    const std::size_t s = config_.patch, t_n = config_.frames, h = config_.height, w = config_.width, c_n = config_.channels;
    const std::size_t hp = h / s, wp = w / s;
    if (static_cast<std::size_t>(tokens.rows()) != t_n * hp * wp || static_cast<std::size_t>(tokens.cols()) != c_n * s * s) {
        throw DimensionError("unpatchify: token matrix does not match the canvas");
    }
    std::vector<float> data(t_n * c_n * h * w);
    for (std::size_t t = 0; t < t_n; ++t) {
        for (std::size_t py = 0; py < hp; ++py) {
            for (std::size_t px = 0; px < wp; ++px) {
                const auto l = static_cast<Eigen::Index>((t * hp + py) * wp + px);
                for (std::size_t c = 0; c < c_n; ++c) {
                    for (std::size_t dy = 0; dy < s; ++dy) {
                        for (std::size_t dx = 0; dx < s; ++dx) {
                            data[((t * c_n + c) * h + py * s + dy) * w + px * s + dx] =
                                static_cast<float>(tokens(l, static_cast<Eigen::Index>((c * s + dy) * s + dx)));
                        }
                    }
                }
            }
        }
    }
    return Tensor({t_n, c_n, h, w}, std::move(data));
}

template <class S>
Mat<S> MicroDenoiser<S>::forward(const Mat<S>& tokens, S t, const TextTokens& text, ForwardCache<S>* cache) const {
    const auto d = static_cast<Eigen::Index>(config_.dim);
    if (static_cast<std::size_t>(tokens.cols()) != config_.token_in() || static_cast<std::size_t>(tokens.rows()) != config_.tokens()) {
        throw DimensionError(fmt::format("denoiser: expected [{}, {}] tokens, got [{}, {}]", config_.tokens(), config_.token_in(),
                                         tokens.rows(), tokens.cols()));
    }
    if (text.empty()) throw DimensionError("denoiser: text token list is empty");

    ForwardCache<S> local;
    ForwardCache<S>& c = cache ? *cache : local;
    c.tokens = tokens;
    c.text = text;

    Mat<S> z = affine(tokens, params_.in_proj);
    z += positions_;

    c.time_features = timestep_features<S>(t, config_.dim);
    c.time_pre = affine(c.time_features, params_.time_in);
    c.time_act = silu(c.time_pre);
    c.cond_pre = affine(c.time_act, params_.time_out);
    c.cond = silu(c.cond_pre);

    c.context.resize(static_cast<Eigen::Index>(text.size()), d);
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] < 0 || static_cast<std::size_t>(text[i]) >= config_.text_vocab) throw DomainError("denoiser: text token out of range");
        c.context.row(static_cast<Eigen::Index>(i)) = params_.text_table.row(text[i]);
    }

    c.blocks.resize(params_.blocks.size());
    for (std::size_t b = 0; b < params_.blocks.size(); ++b) {
        const auto& bp = params_.blocks[b];
        auto& bc = c.blocks[b];
        bc.mod = affine(c.cond, bp.modulation);
        for (int k = 0; k < 3; ++k) {
            auto& sc = bc.sub[k];
            const auto shift = bc.mod.middleCols((3 * k) * d, d);
            const auto scale = bc.mod.middleCols((3 * k + 1) * d, d);
            const auto gate = bc.mod.middleCols((3 * k + 2) * d, d);
            sc.z_in = z;
            layer_norm(z, sc.normed, sc.rstd);
            sc.h = modulate<S>(sc.normed, shift, scale);
            if (k == 0 || k == 1) {
                const auto& ap = k == 0 ? bp.self_attn : bp.cross_attn;
                const Mat<S>& kv_src = k == 0 ? sc.h : c.context;
                sc.q = affine(sc.h, ap.q);
                sc.k = affine(kv_src, ap.k);
                sc.v = affine(kv_src, ap.v);
                sc.heads_out = multi_head_attention(sc.q, sc.k, sc.v, config_.heads, &sc.attn);
                sc.out = affine(sc.heads_out, ap.o);
            } else {
                sc.pre = affine(sc.h, bp.ff_in);
                sc.act = gelu(sc.pre);
                sc.out = affine(sc.act, bp.ff_out);
            }
            Mat<S> gated = sc.out;
            gated.array().rowwise() *= gate.row(0).array();
            z += gated;
        }
    }

    c.final_mod = affine(c.cond, params_.final_modulation);
    layer_norm(z, c.final_normed, c.final_rstd);
    c.final_h = modulate<S>(c.final_normed, c.final_mod.leftCols(d), c.final_mod.rightCols(d));
    return affine(c.final_h, params_.out_proj);
}

template <class S>
void MicroDenoiser<S>::backward(const ForwardCache<S>& c, const Mat<S>& d_out, DenoiserParams<S>& g) const {
    const auto d = static_cast<Eigen::Index>(config_.dim);
    Mat<S> d_cond = Mat<S>::Zero(1, d);
    Mat<S> d_context = Mat<S>::Zero(c.context.rows(), d);

    // output head
    Mat<S> d_h;
    affine_backward(c.final_h, d_out, params_.out_proj, g.out_proj, &d_h);
    Mat<S> d_fmod(1, 2 * d);
    d_fmod.leftCols(d) = d_h.colwise().sum();
    d_fmod.rightCols(d) = (d_h.array() * c.final_normed.array()).colwise().sum();
    Mat<S> d_n = d_h;
    d_n.array().rowwise() *= (c.final_mod.rightCols(d).row(0).array() + S(1));
    Mat<S> d_z = layer_norm_backward(d_n, c.final_normed, c.final_rstd);
    {
        Mat<S> dc;
        affine_backward(c.cond, d_fmod, params_.final_modulation, g.final_modulation, &dc);
        d_cond += dc;
    }

    for (std::size_t bi = params_.blocks.size(); bi-- > 0;) {
        const auto& bp = params_.blocks[bi];
        auto& bg = g.blocks[bi];
        const auto& bc = c.blocks[bi];
        Mat<S> d_mod = Mat<S>::Zero(1, 9 * d);
        for (int k = 2; k >= 0; --k) {
            const auto& sc = bc.sub[k];
            const auto scale = bc.mod.middleCols((3 * k + 1) * d, d);
            const auto gate = bc.mod.middleCols((3 * k + 2) * d, d);

            d_mod.middleCols((3 * k + 2) * d, d) = (d_z.array() * sc.out.array()).colwise().sum();
            Mat<S> d_sub = d_z;
            d_sub.array().rowwise() *= gate.row(0).array();

            Mat<S> d_hk;
            if (k == 2) {
                Mat<S> d_act;
                affine_backward(sc.act, d_sub, bp.ff_out, bg.ff_out, &d_act);
                Mat<S> d_pre = (d_act.array() * gelu_grad(sc.pre).array()).matrix();
                affine_backward(sc.h, d_pre, bp.ff_in, bg.ff_in, &d_hk);
            } else {
                const auto& ap = k == 0 ? bp.self_attn : bp.cross_attn;
                auto& ag = k == 0 ? bg.self_attn : bg.cross_attn;
                Mat<S> d_heads;
                affine_backward(sc.heads_out, d_sub, ap.o, ag.o, &d_heads);
                Mat<S> dq, dk, dv;
                multi_head_attention_backward(sc.q, sc.k, sc.v, config_.heads, sc.attn, d_heads, dq, dk, dv);
                affine_backward(sc.h, dq, ap.q, ag.q, &d_hk);
                const Mat<S>& kv_src = k == 0 ? sc.h : c.context;
                Mat<S> d_src_k, d_src_v;
                affine_backward(kv_src, dk, ap.k, ag.k, &d_src_k);
                affine_backward(kv_src, dv, ap.v, ag.v, &d_src_v);
                if (k == 0) {
                    d_hk += d_src_k + d_src_v;
                } else {
                    d_context += d_src_k + d_src_v;
                }
            }

            d_mod.middleCols((3 * k) * d, d) = d_hk.colwise().sum();
            d_mod.middleCols((3 * k + 1) * d, d) = (d_hk.array() * sc.normed.array()).colwise().sum();
            Mat<S> d_nk = d_hk;
            d_nk.array().rowwise() *= (scale.row(0).array() + S(1));
            d_z += layer_norm_backward(d_nk, sc.normed, sc.rstd);
        }
        Mat<S> dc;
        affine_backward(c.cond, d_mod, bp.modulation, bg.modulation, &dc);
        d_cond += dc;
    }

    // timestep MLP
    Mat<S> d_cond_pre = (d_cond.array() * silu_grad(c.cond_pre).array()).matrix();
    Mat<S> d_time_act;
    affine_backward(c.time_act, d_cond_pre, params_.time_out, g.time_out, &d_time_act);
    Mat<S> d_time_pre = (d_time_act.array() * silu_grad(c.time_pre).array()).matrix();
    affine_backward<S>(c.time_features, d_time_pre, params_.time_in, g.time_in, nullptr);

    for (std::size_t i = 0; i < c.text.size(); ++i) g.text_table.row(c.text[i]) += d_context.row(static_cast<Eigen::Index>(i));

    affine_backward<S>(c.tokens, d_z, params_.in_proj, g.in_proj, nullptr);
}

template <class S>
Tensor MicroDenoiser<S>::velocity(const Tensor& x_in, float t, const TextTokens& text) const {
    require_rank(x_in, 4, "denoiser input");
    if (x_in.extent(0) != config_.frames || x_in.extent(1) != config_.in_channels() || x_in.extent(2) != config_.height ||
        x_in.extent(3) != config_.width) {
        throw DimensionError(fmt::format("denoiser: input {} does not match [{}, {}, {}, {}]", to_string(x_in.shape()),
                                         config_.frames, config_.in_channels(), config_.height, config_.width));
    }
    const Mat<S> tokens = patchify(x_in.data(), config_.in_channels());
    return unpatchify(forward(tokens, static_cast<S>(t), text));
}

template <class To, class From>
DenoiserParams<To> cast_params(const DenoiserParams<From>& p) {
    DenoiserParams<To> out;
    auto cast_lin = [](const Linear<From>& l) { return Linear<To>{l.w.template cast<To>(), l.b.template cast<To>()}; };
    out.in_proj = cast_lin(p.in_proj);
    out.time_in = cast_lin(p.time_in);
    out.time_out = cast_lin(p.time_out);
    out.text_table = p.text_table.template cast<To>();
    for (const auto& b : p.blocks) {
        BlockParams<To> nb;
        nb.modulation = cast_lin(b.modulation);
        nb.self_attn = {cast_lin(b.self_attn.q), cast_lin(b.self_attn.k), cast_lin(b.self_attn.v), cast_lin(b.self_attn.o)};
        nb.cross_attn = {cast_lin(b.cross_attn.q), cast_lin(b.cross_attn.k), cast_lin(b.cross_attn.v), cast_lin(b.cross_attn.o)};
        nb.ff_in = cast_lin(b.ff_in);
        nb.ff_out = cast_lin(b.ff_out);
        out.blocks.push_back(std::move(nb));
    }
    out.final_modulation = cast_lin(p.final_modulation);
    out.out_proj = cast_lin(p.out_proj);
    return out;
}

template struct DenoiserParams<float>;
template struct DenoiserParams<double>;
template class MicroDenoiser<float>;
template class MicroDenoiser<double>;
template Mat<float> timestep_features<float>(float, std::size_t);
template Mat<double> timestep_features<double>(double, std::size_t);
template DenoiserParams<double> cast_params<double, float>(const DenoiserParams<float>&);
template DenoiserParams<float> cast_params<float, double>(const DenoiserParams<double>&);

}  // namespace trajforge::fm

#include "trajforge/flowmatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "trajforge/error.hpp"
#include "trajforge/stam.hpp"

namespace trajforge::fm {

namespace {

std::size_t resolve_threads(std::size_t requested, std::size_t work) {
    std::size_t n = requested ? requested : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(1, work));
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; each index is handled exactly once.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
    threads = resolve_threads(threads, n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += threads) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    pool.clear();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct SampleTokens {
    Mat<float> input;
    Mat<float> target;
};

SampleTokens to_tokens(const MicroDenoiser<float>& model, const TrainItem& item) {
    const Tensor x_in = assemble_input(item.sample.z_t, item.cond.mask4, item.cond.z_cond);
    return {model.patchify(x_in.data(), model.config().in_channels()),
            model.patchify(item.sample.v_target.data(), model.config().channels)};
}

double token_mse(const Mat<float>& y, const Mat<float>& target) {
    return (y.cast<double>() - target.cast<double>()).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

void TrainConfig::validate() const {
    model.validate();
    data.validate();
    if (model.frames != data.frames || model.channels != data.channels || model.height != data.latent_size() ||
        model.width != data.latent_size()) {
        throw DomainError(fmt::format("train config: model canvas {}x{}x{}x{} does not match dataset latents {}x{}x{}x{}",
                                      model.frames, model.channels, model.height, model.width, data.frames, data.channels,
                                      data.latent_size(), data.latent_size()));
    }
    if (batch == 0) throw DomainError("train config: batch must be >= 1");
    if (!(lr >= 0.0) || !(clip > 0.0)) throw DomainError("train config: lr must be >= 0 and clip > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"model", to_json(c.model)},
            {"data", to_json(c.data)},
            {"adamw", {{"beta1", c.adamw.beta1}, {"beta2", c.adamw.beta2}, {"eps", c.adamw.eps}, {"weight_decay", c.adamw.weight_decay}}},
            {"lr", c.lr},
            {"steps", c.steps},
            {"batch", c.batch},
            {"seed", c.seed},
            {"clip", c.clip},
            {"conditioned", c.conditioned},
            {"threads", c.threads}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("train config: expected a JSON object");
    TrainConfig c;
    try {
        if (j.contains("model")) c.model = denoiser_config_from_json(j.at("model"));
        if (j.contains("data")) c.data = squares_config_from_json(j.at("data"));
        if (j.contains("adamw")) {
            const auto& a = j.at("adamw");
            c.adamw.beta1 = a.value("beta1", c.adamw.beta1);
            c.adamw.beta2 = a.value("beta2", c.adamw.beta2);
            c.adamw.eps = a.value("eps", c.adamw.eps);
            c.adamw.weight_decay = a.value("weight_decay", c.adamw.weight_decay);
        }
        c.lr = j.value("lr", c.lr);
        c.steps = j.value("steps", c.steps);
        c.batch = j.value("batch", c.batch);
        c.seed = j.value("seed", c.seed);
        c.clip = j.value("clip", c.clip);
        c.conditioned = j.value("conditioned", c.conditioned);
        c.threads = j.value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("train config: {}", e.what()));
    }
    c.validate();
    return c;
}

double batch_loss(const MicroDenoiser<float>& model, std::span<const TrainItem> batch, std::size_t threads) {
    if (batch.empty()) throw DomainError("batch_loss: empty batch");
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
        const auto tok = to_tokens(model, batch[i]);
        losses[i] = token_mse(model.forward(tok.input, batch[i].sample.t, batch[i].cond.text), tok.target);
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(batch.size());
}

double batch_gradients(const MicroDenoiser<float>& model, std::span<const TrainItem> batch, DenoiserParams<float>& grads,
                       std::size_t threads) {
    if (batch.empty()) throw DomainError("batch_gradients: empty batch");
    const std::size_t b = batch.size();
    std::vector<double> losses(b);
    std::vector<DenoiserParams<float>> per_sample(b);
    parallel_for(b, threads, [&](std::size_t i) {
        const auto tok = to_tokens(model, batch[i]);
        ForwardCache<float> cache;
        const Mat<float> y = model.forward(tok.input, batch[i].sample.t, batch[i].cond.text, &cache);
        losses[i] = token_mse(y, tok.target);
        const float scale = 2.0f / static_cast<float>(static_cast<double>(y.size()) * static_cast<double>(b));
        const Mat<float> dy = (y - tok.target) * scale;
        per_sample[i] = model.params().zeros_like();
        model.backward(cache, dy, per_sample[i]);
    });
    grads = model.params().zeros_like();
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        grads.add(per_sample[i]);
        sum += losses[i];
    }
    return sum / static_cast<double>(b);
}

StepStats train_step(MicroDenoiser<float>& model, AdamW& opt, std::span<const TrainItem> batch, double lr, double clip,
                     std::size_t threads) {
    DenoiserParams<float> grads;
    StepStats stats;
    stats.loss = batch_gradients(model, batch, grads, threads);
    if (!std::isfinite(stats.loss)) {
        throw TrainingError(fmt::format("training diverged: loss = {} at optimizer step {}", stats.loss, opt.steps_taken() + 1));
    }
    stats.grad_norm = clip_grad_norm(grads, clip);
    if (!std::isfinite(stats.grad_norm)) {
        throw TrainingError(fmt::format("training diverged: gradient norm = {} at optimizer step {}", stats.grad_norm,
                                        opt.steps_taken() + 1));
    }
    opt.step(model.params(), grads, lr);
    return stats;
}

std::vector<TrainItem> draw_batch(const TrainConfig& config, std::mt19937_64& rng, std::size_t size) {
    std::vector<TrainItem> out;
    out.reserve(size);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    for (std::size_t i = 0; i < size; ++i) {
        const SquaresScene scene = make_scene(config.data, rng);
        Condition cond = scene_condition(scene, config.model);
        if (!config.conditioned) cond = without_layout(cond);
        const Tensor z0 = gaussian(scene.latent.shape(), rng);
        const float t = unit(rng);
        out.push_back({make_flow_sample(scene.latent, z0, t), std::move(cond)});
    }
    return out;
}

Trainer::Trainer(TrainConfig config) : Trainer(config, MicroDenoiser<float>(config.model, config.seed), 0) {}

Trainer::Trainer(TrainConfig config, MicroDenoiser<float> model, std::size_t step)
    : config_(std::move(config)), model_(std::move(model)), opt_(config_.adamw), step_(step) {
    config_.validate();
    if (!(model_.config() == config_.model)) throw DomainError("trainer: model does not match the configuration");
}

StepStats Trainer::step() {
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(step_), 0x5eedu};
    std::mt19937_64 rng(seq);
    const auto batch = draw_batch(config_, rng, config_.batch);
    const StepStats s = train_step(model_, opt_, batch, config_.lr, config_.clip, config_.threads);
    ++step_;
    return s;
}

void Trainer::run(const std::function<void(std::size_t, const StepStats&)>& on_step) {
    while (step_ < config_.steps) {
        const StepStats s = step();
        if (on_step) on_step(step_, s);
    }
}

}  // namespace trajforge::fm

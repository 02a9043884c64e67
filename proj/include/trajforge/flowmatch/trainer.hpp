#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/flowmatch/flow.hpp"
#include "trajforge/flowmatch/micro_denoiser.hpp"
#include "trajforge/flowmatch/optimizer.hpp"
#include "trajforge/flowmatch/squares.hpp"

namespace trajforge::fm {

struct TrainConfig {
    DenoiserConfig model;
    SquaresConfig data;
    AdamWConfig adamw;
    double lr = 1e-3;
    std::size_t steps = 2000;
    std::size_t batch = 4;
    std::uint64_t seed = 0;
    double clip = 10.0;
    /// false trains the ablation: z_cond and mask4 zeroed.
    bool conditioned = true;
    /// Worker threads for the per-sample passes; 0 = hardware concurrency.
    std::size_t threads = 0;

    /// Throws DomainError when the model and dataset disagree on extents.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults. Throws InputError on malformed JSON.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainItem {
    FlowSample sample;
    Condition cond;
};

struct StepStats {
    double loss = 0.0;       // batch mean, before the update
    double grad_norm = 0.0;  // before clipping
};

/// Batch-mean flow-matching loss of the denoiser, no update.
double batch_loss(const MicroDenoiser<float>& model, std::span<const TrainItem> batch, std::size_t threads = 1);

/// Gradients of batch_loss, reduced over samples in batch order.
double batch_gradients(const MicroDenoiser<float>& model, std::span<const TrainItem> batch, DenoiserParams<float>& grads,
                       std::size_t threads = 1);

/// Forward/backward, global-norm clipping, one AdamW step. Throws
/// TrainingError when the loss is not finite.
StepStats train_step(MicroDenoiser<float>& model, AdamW& opt, std::span<const TrainItem> batch, double lr, double clip,
                     std::size_t threads = 1);

/// Random flow samples of synthetic scenes.
std::vector<TrainItem> draw_batch(const TrainConfig& config, std::mt19937_64& rng, std::size_t size);

/// Owns model, optimizer and data stream. Batch k depends only on (seed, k).
class Trainer {
public:
    explicit Trainer(TrainConfig config);
    Trainer(TrainConfig config, MicroDenoiser<float> model, std::size_t step);

    StepStats step();
    /// Runs until `config.steps`; `on_step(k, stats)` after every step.
    void run(const std::function<void(std::size_t, const StepStats&)>& on_step = {});

    const MicroDenoiser<float>& model() const noexcept { return model_; }
    const TrainConfig& config() const noexcept { return config_; }
    std::size_t steps_done() const noexcept { return step_; }

private:
    TrainConfig config_;
    MicroDenoiser<float> model_;
    AdamW opt_;
    std::size_t step_ = 0;
};

}  // namespace trajforge::fm

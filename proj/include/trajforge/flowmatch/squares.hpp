#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/flowmatch/flow.hpp"
#include "trajforge/layout.hpp"
#include "trajforge/metrics.hpp"
#include "trajforge/stam.hpp"

namespace trajforge::fm {

/// Moving colored squares over a fixed sinusoidal texture. Latents are the
/// pixel video average-pooled by `pool`.
struct SquaresConfig {
    std::size_t frames = 8;
    std::size_t channels = 4;
    std::size_t pixels = 64;
    std::size_t pool = 4;
    std::size_t min_objects = 1;
    std::size_t max_objects = 3;
    double min_side = 20.0;  // pixels
    double max_side = 32.0;
    double texture = 0.25;
    /// Probability that an entry is conditioned on a still image rather than a clip.
    double image_probability = 0.5;
    std::size_t crop = 8;  // reference crop size in latent cells

    std::size_t latent_size() const noexcept { return pixels / pool; }
    void validate() const;

    friend bool operator==(const SquaresConfig&, const SquaresConfig&) = default;
};

nlohmann::json to_json(const SquaresConfig& c);
SquaresConfig squares_config_from_json(const nlohmann::json& j);

struct Square {
    std::vector<float> color;  // one +-1 value per channel
    std::vector<Vec2> center;  // pixels, per frame
    std::vector<double> side;  // pixels, per frame
};

struct SquaresScene {
    Tensor pixels;  // [T, C, P, P]
    Tensor latent;  // [T, C, P / pool, P / pool]
    std::vector<Square> squares;
    CompositionLayout layout;
    ReferenceMap refs;
};

/// Background value of channel `c` at pixel (x, y).
float background_texture(const SquaresConfig& config, std::size_t c, double x, double y);

/// Draws one scene; `objects` = 0 picks a count in [min_objects, max_objects].
SquaresScene make_scene(const SquaresConfig& config, std::mt19937_64& rng, std::size_t objects = 0);

/// The layout condition of a scene (STAM compose) plus hashed caption tokens.
Condition scene_condition(const SquaresScene& scene, const DenoiserConfig& model);

/// Per-frame boxes of the latent cells whose channel vector lies within
/// `radius` of `color` (cell coordinates, inclusive indices).
metrics::BoxTrack color_boxes(const Tensor& latent, std::span<const float> color, double radius = 1.0);

struct ControlScore {
    double miou = 0.0;
    double cd = 0.0;
    std::size_t frames = 0;
    /// Frames where the target exists but nothing was generated; scored as
    /// IoU 0 and centroid distance 1.
    std::size_t missed = 0;
};

/// Samples every scene and scores the first square's generated boxes against
/// its ground-truth boxes.
ControlScore evaluate_control(const VelocityField& model, std::span<const SquaresScene> scenes, const DenoiserConfig& config,
                              bool conditioned, std::size_t steps, std::uint64_t seed);

}  // namespace trajforge::fm

#include "trajforge/flowmatch/squares.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "trajforge/decompositor.hpp"
#include "trajforge/error.hpp"

namespace trajforge::fm {

void SquaresConfig::validate() const {
    if (frames == 0 || channels == 0 || pixels == 0 || pool == 0 || pixels % pool != 0) {
        throw DomainError("squares: pixel size must be a positive multiple of the pool factor");
    }
    if (min_objects == 0 || max_objects < min_objects) throw DomainError("squares: invalid object count range");
    if (!(min_side > 0.0 && max_side >= min_side)) throw DomainError("squares: invalid side range");
    if (!(image_probability >= 0.0 && image_probability <= 1.0)) throw DomainError("squares: image_probability outside [0, 1]");
    if (crop == 0) throw DomainError("squares: crop must be >= 1");
}

nlohmann::json to_json(const SquaresConfig& c) {
    return {{"frames", c.frames},           {"channels", c.channels},     {"pixels", c.pixels},
            {"pool", c.pool},               {"min_objects", c.min_objects}, {"max_objects", c.max_objects},
            {"min_side", c.min_side},       {"max_side", c.max_side},     {"texture", c.texture},
            {"image_probability", c.image_probability}, {"crop", c.crop}};
}

SquaresConfig squares_config_from_json(const nlohmann::json& j) {
    SquaresConfig c;
    try {
        c.frames = j.value("frames", c.frames);
        c.channels = j.value("channels", c.channels);
        c.pixels = j.value("pixels", c.pixels);
        c.pool = j.value("pool", c.pool);
        c.min_objects = j.value("min_objects", c.min_objects);
        c.max_objects = j.value("max_objects", c.max_objects);
        c.min_side = j.value("min_side", c.min_side);
        c.max_side = j.value("max_side", c.max_side);
        c.texture = j.value("texture", c.texture);
        c.image_probability = j.value("image_probability", c.image_probability);
        c.crop = j.value("crop", c.crop);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("dataset config: {}", e.what()));
    }
    c.validate();
    return c;
}

float background_texture(const SquaresConfig& config, std::size_t c, double x, double y) {
    const double fx = static_cast<double>(1 + c % 2), fy = static_cast<double>(1 + (c / 2) % 2);
    const double phase = static_cast<double>(c) * std::numbers::pi / 4.0;
    const double p = static_cast<double>(config.pixels);
    return static_cast<float>(config.texture * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) / p + phase));
}

namespace {

Tensor average_pool(const Tensor& x, std::size_t k) {
    const std::size_t t_n = x.extent(0), c_n = x.extent(1), h = x.extent(2) / k, w = x.extent(3) / k;
    Tensor out({t_n, c_n, h, w});
    const float inv = 1.0f / static_cast<float>(k * k);
    for (std::size_t t = 0; t < t_n; ++t) {
        for (std::size_t c = 0; c < c_n; ++c) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    float s = 0.0f;
                    for (std::size_t dy = 0; dy < k; ++dy) {
                        for (std::size_t dx = 0; dx < k; ++dx) s += x.at(t, c, y * k + dy, xx * k + dx);
                    }
                    out.at(t, c, y, xx) = s * inv;
                }
            }
        }
    }
    return out;
}

Square random_square(const SquaresConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(0.15, 0.85), side(cfg.min_side, cfg.max_side), growth(0.85, 1.15);
    std::bernoulli_distribution sign(0.5);
    Square sq;
    for (std::size_t c = 0; c < cfg.channels; ++c) sq.color.push_back(sign(rng) ? 1.0f : -1.0f);

    const std::size_t last = cfg.frames - 1;
    std::size_t mid = last / 2;
    if (cfg.frames > 2) mid = std::uniform_int_distribution<std::size_t>(1, last - 1)(rng);
    const double p = static_cast<double>(cfg.pixels);
    const Vec2 w0{pos(rng) * p, pos(rng) * p}, w1{pos(rng) * p, pos(rng) * p}, w2{pos(rng) * p, pos(rng) * p};
    const double a0 = side(rng), a1 = a0 * growth(rng);
    for (std::size_t t = 0; t < cfg.frames; ++t) {
        Vec2 c = w0;
        if (last > 0) {
            if (t <= mid) {
                const double u = mid == 0 ? 1.0 : static_cast<double>(t) / static_cast<double>(mid);
                c = {w0.x + u * (w1.x - w0.x), w0.y + u * (w1.y - w0.y)};
            } else {
                const double u = static_cast<double>(t - mid) / static_cast<double>(last - mid);
                c = {w1.x + u * (w2.x - w1.x), w1.y + u * (w2.y - w1.y)};
            }
        }
        sq.center.push_back(c);
        sq.side.push_back(last > 0 ? a0 + (a1 - a0) * static_cast<double>(t) / static_cast<double>(last) : a0);
    }
    return sq;
}

}  // namespace

SquaresScene make_scene(const SquaresConfig& cfg, std::mt19937_64& rng, std::size_t objects) {
    cfg.validate();
    if (objects == 0) objects = std::uniform_int_distribution<std::size_t>(cfg.min_objects, cfg.max_objects)(rng);
    const std::size_t t_n = cfg.frames, c_n = cfg.channels, p = cfg.pixels;

    SquaresScene scene;
    for (std::size_t i = 0; i < objects; ++i) scene.squares.push_back(random_square(cfg, rng));

    scene.pixels = Tensor({t_n, c_n, p, p});
    for (std::size_t t = 0; t < t_n; ++t) {
        for (std::size_t y = 0; y < p; ++y) {
            for (std::size_t x = 0; x < p; ++x) {
                const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
                const Square* top = nullptr;
                for (const auto& sq : scene.squares) {
                    const double h = 0.5 * sq.side[t];
                    if (std::abs(px - sq.center[t].x) < h && std::abs(py - sq.center[t].y) < h) top = &sq;
                }
                for (std::size_t c = 0; c < c_n; ++c) {
                    scene.pixels.at(t, c, y, x) = top ? top->color[c] : background_texture(cfg, c, px, py);
                }
            }
        }
    }
    scene.latent = average_pool(scene.pixels, cfg.pool);

    const std::size_t n = cfg.latent_size();
    scene.layout.canvas = Canvas{t_n, n, n};
    std::bernoulli_distribution as_image(cfg.image_probability);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < scene.squares.size(); ++i) {
        const auto& sq = scene.squares[i];
        std::vector<TrajectoryAnchor> anchors;
        for (std::size_t t = 0; t < t_n; ++t) {
            const double s = std::max(sq.side[t] / static_cast<double>(p), kMinScale);
            anchors.push_back({{sq.center[t].x / static_cast<double>(p), sq.center[t].y / static_cast<double>(p)}, {s, s}, true});
        }
        Trajectory traj(std::move(anchors), 16.0);
        const Modality modality = as_image(rng) ? Modality::image : Modality::video;
        Tensor clip = crop_reference(scene.latent, traj, {cfg.crop, cfg.crop});
        Tensor features = clip;
        if (modality == Modality::image) {
            const std::size_t per = c_n * cfg.crop * cfg.crop;
            features = Tensor({c_n, cfg.crop, cfg.crop}, std::vector<float>(clip.data().begin(), clip.data().begin() + per));
        }
        const std::string id = fmt::format("sq{}", i);
        scene.refs.emplace(id, Reference(id, modality, std::move(features)));
        scene.layout.entries.push_back({id, modality, std::move(traj), Priority::none, ""});
        std::string pattern;
        for (float v : sq.color) pattern += v > 0 ? '+' : '-';
        words.push_back(fmt::format("square {}", pattern));
    }
    scene.layout.caption = fmt::format("{}", fmt::join(words, " and "));
    return scene;
}

Condition scene_condition(const SquaresScene& scene, const DenoiserConfig& model) {
    const ConditioningBundle b = compose(scene.layout, scene.refs, scene.latent.extent(1));
    return {b.mask4, b.z_cond, hash_caption(scene.layout.caption, model.text_vocab, model.text_tokens)};
}

metrics::BoxTrack color_boxes(const Tensor& latent, std::span<const float> color, double radius) {
    require_rank(latent, 4, "color_boxes latent");
    const std::size_t t_n = latent.extent(0), c_n = latent.extent(1), h = latent.extent(2), w = latent.extent(3);
    if (color.size() != c_n) throw DimensionError("color_boxes: color length differs from the channel count");
    std::vector<ObjectMask> masks;
    for (std::size_t t = 0; t < t_n; ++t) {
        ObjectMask m(w, h, t);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < c_n; ++c) {
                    const double d = static_cast<double>(latent.at(t, c, y, x)) - color[c];
                    d2 += d * d;
                }
                if (d2 < radius * radius) m.set(x, y, true);
            }
        }
        masks.push_back(std::move(m));
    }
    return metrics::boxes_from_masks(masks);
}

ControlScore evaluate_control(const VelocityField& model, std::span<const SquaresScene> scenes, const DenoiserConfig& config,
                              bool conditioned, std::size_t steps, std::uint64_t seed) {
    ControlScore score;
    double iou_sum = 0.0, cd_sum = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& scene = scenes[i];
        Condition cond = scene_condition(scene, config);
        if (!conditioned) cond = without_layout(cond);
        const Tensor sample = euler_sample(model, cond, scene.latent.shape(), steps, seed + i);
        const auto& color = scene.squares.front().color;
        const auto target = color_boxes(scene.latent, color);
        const auto generated = color_boxes(sample, color);
        const double w = static_cast<double>(scene.latent.extent(3)), h = static_cast<double>(scene.latent.extent(2));
        for (std::size_t t = 0; t < target.size(); ++t) {
            if (!target[t]) continue;
            ++score.frames;
            if (!generated[t]) {
                ++score.missed;
                cd_sum += 1.0;
                continue;
            }
            const metrics::BoxTrack g{generated[t]}, r{target[t]};
            iou_sum += metrics::iou(*generated[t], *target[t]);
            cd_sum += metrics::centroid_distance(g, r, w, h).value;
        }
    }
    if (score.frames) {
        score.miou = iou_sum / static_cast<double>(score.frames);
        score.cd = cd_sum / static_cast<double>(score.frames);
    }
    return score;
}

}  // namespace trajforge::fm

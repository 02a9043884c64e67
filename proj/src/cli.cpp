#include "trajforge/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "trajforge/error.hpp"
#include "trajforge/flowmatch/checkpoint.hpp"
#include "trajforge/flowmatch/flow.hpp"
#include "trajforge/flowmatch/trainer.hpp"
#include "trajforge/formats.hpp"
#include "trajforge/htf.hpp"
#include "trajforge/metrics.hpp"
#include "trajforge/service.hpp"

namespace trajforge::cli {

namespace {

void require_file(const fs::path& p, std::string_view what) {
    if (!fs::is_regular_file(p)) throw InputError(fmt::format("{} not found: {}", what, p.string()));
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw InputError(fmt::format("cannot create output directory {}", p.string()));
}

std::optional<std::string> sole_foreground(const CompositionLayout& layout) {
    std::optional<std::string> fg;
    for (const auto& e : layout.entries) {
        if (e.priority != Priority::foreground) continue;
        if (fg) return std::nullopt;
        fg = e.reference_id;
    }
    return fg;
}

void write_ppm(const fs::path& path, const Tensor& latent) {
    constexpr std::size_t kZoom = 4;
    const std::size_t t_n = latent.extent(0), c_n = latent.extent(1), h = latent.extent(2), w = latent.extent(3);
    const std::size_t width = t_n * w * kZoom, height = h * kZoom;
    std::vector<std::uint8_t> px(width * height * 3);
    const auto level = [](float v) {
        return static_cast<std::uint8_t>(std::clamp(std::lround((v + 1.5f) / 3.0f * 255.0f), 0l, 255l));
    };
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t t = x / (w * kZoom), cx = (x % (w * kZoom)) / kZoom, cy = y / kZoom;
            for (std::size_t k = 0; k < 3; ++k) px[(y * width + x) * 3 + k] = level(latent.at(t, std::min(k, c_n - 1), cy, cx));
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError(fmt::format("cannot write {}", path.string()));
    f << "P6\n" << width << ' ' << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

metrics::BoxTrack read_boxes(const fs::path& path, std::size_t frames) {
    const json j = read_json_file(path);
    if (!j.is_array()) throw InputError(fmt::format("{}: expected a list of {{frame, box}} objects", path.string()));
    metrics::BoxTrack track(frames);
    for (std::size_t i = 0; i < j.size(); ++i) {
        try {
            const auto frame = j[i].at("frame").get<std::size_t>();
            const auto b = j[i].at("box").get<std::vector<double>>();
            if (b.size() != 4) throw InputError("box must have 4 numbers");
            if (!(b[2] >= b[0] && b[3] >= b[1])) throw DomainError(fmt::format("{}: box {} has max < min", path.string(), i));
            if (frame >= frames) throw InputError("frame index out of range");
            if (track[frame]) throw InputError(fmt::format("frame {} listed twice", frame));
            track[frame] = metrics::Box{b[0], b[1], b[2], b[3], frame};
        } catch (const json::exception& e) {
            throw InputError(fmt::format("{}: entry {}: {}", path.string(), i, e.what()));
        }
    }
    return track;
}

std::size_t frame_count(const fs::path& path) {
    const json j = read_json_file(path);
    std::size_t n = 0;
    if (!j.is_array()) throw InputError(fmt::format("{}: expected a list of {{frame, box}} objects", path.string()));
    for (const auto& e : j) {
        if (e.is_object() && e.contains("frame") && e["frame"].is_number_unsigned()) n = std::max(n, e["frame"].get<std::size_t>() + 1);
    }
    return n;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<double> as_vector(const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); }

}  // namespace

int exit_code_for(std::string_view code) noexcept {
    if (code == "E_USAGE") return kExitUsage;
    if (code == "E_INPUT") return 2;
    if (code == "E_DOMAIN" || code == "E_DIM") return 3;
    if (code == "E_TRAIN") return 4;
    return 5;
}

fs::path run_decompose(const DecomposeArgs& args) {
    require_file(args.frames, "frames file");
    if (args.masks.size() != args.tracks.size()) {
        throw InputError(fmt::format("--masks lists {} files but --tracks lists {}", args.masks.size(), args.tracks.size()));
    }
    for (const auto& m : args.masks) require_file(m, "mask file");
    for (const auto& t : args.tracks) require_file(t, "track file");
    ensure_dir(args.out);

    const Tensor frames = htf::read_file(args.frames);
    std::vector<ObjectInput> objects;
    for (std::size_t i = 0; i < args.masks.size(); ++i) {
        PointTracks tracks = tracks_from_json(read_json_file(args.tracks[i]));
        ObjectMask mask = read_pgm(args.masks[i], tracks.t_ref);
        objects.push_back({std::move(mask), std::move(tracks)});
    }
    const Decomposition d = decompose(frames, objects, {args.canvas, args.crop, args.caption});
    for (std::size_t i = 0; i < d.references.size(); ++i) {
        htf::write_file(args.out / d.layout.entries[i].ref_file, d.references[i]);
    }
    const fs::path layout_path = args.out / "layout.json";
    write_json_file(layout_path, layout_to_json(d.layout));
    return layout_path;
}

LoadedLayout load_layout(const fs::path& path, std::size_t default_channels) {
    require_file(path, "layout file");
    LoadedLayout out{layout_from_json(read_json_file(path)), {}, default_channels};
    const fs::path dir = path.parent_path();
    for (std::size_t i = 0; i < out.layout.entries.size(); ++i) {
        const auto& e = out.layout.entries[i];
        if (e.ref_file.empty()) throw InputError(fmt::format("entry {} has no ref_file", e.reference_id));
        const fs::path ref = dir / e.ref_file;
        require_file(ref, "reference file");
        Reference r(e.reference_id, e.modality, htf::read_file(ref));
        if (i == 0) {
            out.channels = r.channels();
        } else if (r.channels() != out.channels) {
            throw DimensionError(fmt::format("reference {} has {} channels, expected {}", e.reference_id, r.channels(), out.channels));
        }
        out.refs.emplace(e.reference_id, std::move(r));
    }
    return out;
}

ConditioningBundle condition_layout(const LoadedLayout& loaded, const std::optional<std::string>& gate) {
    ConditioningBundle b = compose(loaded.layout, loaded.refs, loaded.channels);
    const auto fg = gate ? gate : sole_foreground(loaded.layout);
    if (fg) {
        if (!loaded.layout.find(*fg)) throw InputError(fmt::format("--gate: no entry '{}' in the layout", *fg));
        b = apply_priority_gate(b, *fg, loaded.layout, loaded.refs);
    }
    return b;
}

void run_compose(const ComposeArgs& args) {
    const LoadedLayout loaded = load_layout(args.layout, args.channels);
    ensure_dir(args.out);
    const ConditioningBundle b = condition_layout(loaded, args.gate);
    std::mt19937_64 rng(args.seed);
    const Tensor z_t = fm::gaussian(b.z_cond.shape(), rng);
    htf::write_file(args.out / "z_cond.htf", b.z_cond);
    htf::write_file(args.out / "mask4.htf", b.mask4);
    htf::write_file(args.out / "x_in.htf", assemble_input(z_t, b));
}

json run_train(const TrainArgs& args) {
    fm::TrainConfig config;
    if (args.config) {
        require_file(*args.config, "training config");
        config = fm::train_config_from_json(read_json_file(*args.config));
    }
    if (args.steps) config.steps = *args.steps;
    if (args.seed) config.seed = *args.seed;
    config.validate();
    if (args.out.has_parent_path()) ensure_dir(args.out.parent_path());

    fm::Trainer trainer(config);
    json summary = {{"steps", config.steps}, {"seed", config.seed}, {"checkpoint", args.out.string()}};
    double first = std::numeric_limits<double>::quiet_NaN(), last = first, window = 0.0;
    std::size_t in_window = 0;
    trainer.run([&](std::size_t step, const fm::StepStats& s) {
        if (step == 1) first = s.loss;
        last = s.loss;
        window += s.loss;
        ++in_window;
        if (!args.quiet && (step % 100 == 0 || step == config.steps)) {
            std::cout << json{{"step", step}, {"loss", window / static_cast<double>(in_window)}, {"grad_norm", s.grad_norm}}.dump()
                      << std::endl;
            window = 0.0;
            in_window = 0;
        }
    });
    fm::save_checkpoint(args.out, {config.model, fm::to_json(config), trainer.steps_done(), trainer.model().params()});
    summary["loss_first"] = number_or_null(first);
    summary["loss_last"] = number_or_null(last);
    return summary;
}

void run_sample(const SampleArgs& args) {
    require_file(args.checkpoint, "checkpoint");
    if (args.steps == 0) throw DomainError("--steps must be >= 1");
    const fm::Checkpoint ckpt = fm::load_checkpoint(args.checkpoint);
    const fm::MicroDenoiser<float> model(ckpt.model, ckpt.params);
    const LoadedLayout loaded = load_layout(args.layout, ckpt.model.channels);
    const Canvas& cv = loaded.layout.canvas;
    if (cv.frames != ckpt.model.frames || cv.height != ckpt.model.height || cv.width != ckpt.model.width ||
        loaded.channels != ckpt.model.channels) {
        throw DimensionError(fmt::format("layout canvas {}x{}x{} with {} channels does not match the model ({}x{}x{}, {} channels)",
                                         cv.frames, cv.height, cv.width, loaded.channels, ckpt.model.frames, ckpt.model.height,
                                         ckpt.model.width, ckpt.model.channels));
    }
    ensure_dir(args.out);
    const ConditioningBundle b = condition_layout(loaded, args.gate);
    fm::Condition cond{b.mask4, b.z_cond, fm::hash_caption(loaded.layout.caption, ckpt.model.text_vocab, ckpt.model.text_tokens)};
    if (args.unconditioned) cond = fm::without_layout(cond);
    const Tensor z = fm::euler_sample(fm::velocity_field(model), cond, b.z_cond.shape(), args.steps, args.seed);
    htf::write_file(args.out / "sample.htf", z);
    write_ppm(args.out / "preview.ppm", z);
}

json run_eval(const EvalArgs& args) {
    require_file(args.generated, "generated boxes");
    require_file(args.target, "target boxes");
    for (const auto* p : {&args.frame_embeddings, &args.reference_embedding, &args.region_embeddings, &args.text_embedding}) {
        if (*p) require_file(**p, "embedding file");
    }
    const std::size_t frames = std::max(frame_count(args.generated), frame_count(args.target));
    const auto gen = read_boxes(args.generated, frames);
    const auto target = read_boxes(args.target, frames);
    const auto iou = metrics::miou(gen, target);
    const auto cd = metrics::centroid_distance(gen, target, args.frame_width, args.frame_height);
    json report = {{"miou", number_or_null(iou.value)},
                   {"cd", number_or_null(cd.value)},
                   {"frames_used", iou.frames_used},
                   {"frames_absent", iou.frames_absent}};
    if (args.frame_embeddings) {
        const auto seq = metrics::EmbeddingSequence::from_tensor(htf::read_file(*args.frame_embeddings), args.frame_embeddings->string());
        report["t_cons"] = seq.size() >= 2 ? json(metrics::temporal_consistency(seq)) : json(nullptr);
        if (args.text_embedding) report["clip_t"] = metrics::text_alignment(as_vector(htf::read_file(*args.text_embedding)), seq);
    } else if (args.text_embedding) {
        throw InputError("--text-embed needs --frame-embed");
    }
    if (args.reference_embedding || args.region_embeddings) {
        if (!args.reference_embedding || !args.region_embeddings) throw InputError("--ref-embed and --region-embed go together");
        const auto regions = metrics::EmbeddingSequence::from_tensor(htf::read_file(*args.region_embeddings), args.region_embeddings->string());
        report["r_sim"] = metrics::region_similarity(as_vector(htf::read_file(*args.reference_embedding)), regions);
    }
    if (args.out) write_json_file(*args.out, report);
    return report;
}

int run_serve(const ServeArgs& args) {
    fs::path dir = "layouts";
    if (args.data_dir) {
        dir = *args.data_dir;
    } else if (const char* env = std::getenv("TRAJFORGE_DATA_DIR"); env && *env) {
        dir = env;
    }
    service::Server server(dir);
    std::cerr << json{{"event", "listening"}, {"host", args.host}, {"port", args.port}, {"data_dir", dir.string()}}.dump() << std::endl;
    if (!server.listen(args.host, args.port)) throw InputError(fmt::format("cannot bind {}:{}", args.host, args.port));
    return 0;
}

}  // namespace trajforge::cli

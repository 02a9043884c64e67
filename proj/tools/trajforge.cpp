#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "trajforge/cli.hpp"
#include "trajforge/error.hpp"

namespace {

using namespace trajforge;

int report_error(std::string_view code, std::string_view message) {
    std::cerr << nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
    return cli::exit_code_for(code);
}

std::vector<std::size_t> parse_dims(const std::string& text, std::size_t count, std::string_view flag) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(part, &used);
            if (used != part.size() || v <= 0) throw std::invalid_argument(part);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw CLI::ValidationError(std::string(flag), fmt::format("'{}' is not a positive integer", part));
        }
    }
    if (out.size() != count) throw CLI::ValidationError(std::string(flag), fmt::format("expected {} comma-separated values", count));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trajectory-controlled video composition toolkit"};
    app.require_subcommand(1);

    cli::DecomposeArgs dec;
    std::string dec_canvas = "8,64,64", dec_crop = "64,64";
    auto* c_dec = app.add_subcommand("decompose", "Video + masks + point tracks -> layout.json and reference crops");
    c_dec->add_option("--frames", dec.frames, "Video frames, HTF [T, C, H, W]")->required();
    c_dec->add_option("--masks", dec.masks, "One binary PGM mask per object, at its tracks' reference frame")->delimiter(',');
    c_dec->add_option("--tracks", dec.tracks, "One point-track JSON file per object")->delimiter(',');
    c_dec->add_option("--out", dec.out, "Output directory")->required();
    c_dec->add_option("--canvas", dec_canvas, "Canvas frames,height,width")->capture_default_str();
    c_dec->add_option("--crop", dec_crop, "Reference crop height,width")->capture_default_str();
    c_dec->add_option("--caption", dec.caption, "Caption stored in the layout");

    cli::ComposeArgs comp;
    std::string gate;
    auto* c_comp = app.add_subcommand("compose", "Layout + references -> z_cond, mask4, x_in");
    c_comp->add_option("--layout", comp.layout, "Layout JSON")->required();
    c_comp->add_option("--out", comp.out, "Output directory")->required();
    c_comp->add_option("--gate", gate, "Foreground entry id for priority gating");
    c_comp->add_option("--channels", comp.channels, "Latent channels when the layout is empty")->capture_default_str();
    c_comp->add_option("--seed", comp.seed, "Seed for the z_t noise inside x_in")->capture_default_str();

    cli::TrainArgs train;
    std::string train_config;
    std::size_t train_steps = 0;
    std::uint64_t train_seed = 0;
    auto* c_train = app.add_subcommand("train", "Train the micro-denoiser on synthetic moving squares");
    c_train->add_option("--config", train_config, "Training config JSON");
    c_train->add_option("--out", train.out, "Checkpoint archive to write")->required();
    auto* o_steps = c_train->add_option("--steps", train_steps, "Optimizer steps (overrides the config)");
    auto* o_seed = c_train->add_option("--seed", train_seed, "Seed (overrides the config)");
    c_train->add_flag("--quiet", train.quiet, "No progress lines");

    cli::SampleArgs sample;
    std::string sample_gate;
    auto* c_sample = app.add_subcommand("sample", "Euler-sample a latent video for a layout");
    c_sample->add_option("--ckpt", sample.checkpoint, "Checkpoint archive")->required();
    c_sample->add_option("--layout", sample.layout, "Layout JSON")->required();
    c_sample->add_option("--out", sample.out, "Output directory")->required();
    c_sample->add_option("--steps", sample.steps, "Euler steps")->capture_default_str();
    c_sample->add_option("--seed", sample.seed, "Noise seed")->capture_default_str();
    c_sample->add_option("--gate", sample_gate, "Foreground entry id for priority gating");
    c_sample->add_flag("--unconditioned", sample.unconditioned, "Zero z_cond and mask4");

    cli::EvalArgs ev;
    std::string ev_frame = "64,64", ev_frame_embed, ev_ref_embed, ev_region_embed, ev_text_embed, ev_out;
    auto* c_eval = app.add_subcommand("eval", "Box and embedding metrics -> JSON report");
    c_eval->add_option("--gen", ev.generated, "Generated boxes JSON [{frame, box: [x0, y0, x1, y1]}]")->required();
    c_eval->add_option("--target", ev.target, "Target boxes JSON")->required();
    c_eval->add_option("--frame", ev_frame, "Frame width,height for the centroid-distance diagonal")->capture_default_str();
    c_eval->add_option("--frame-embed", ev_frame_embed, "Per-frame embeddings HTF [T, D]");
    c_eval->add_option("--ref-embed", ev_ref_embed, "Reference embedding HTF [D]");
    c_eval->add_option("--region-embed", ev_region_embed, "Per-frame region embeddings HTF [T, D]");
    c_eval->add_option("--text-embed", ev_text_embed, "Caption embedding HTF [D]");
    c_eval->add_option("--out", ev_out, "Report path (also printed to stdout)");

    cli::ServeArgs serve;
    std::string data_dir;
    auto* c_serve = app.add_subcommand("serve", "Preview/validation HTTP service");
    c_serve->add_option("--port", serve.port, "Port")->capture_default_str();
    c_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
    c_serve->add_option("--data-dir", data_dir, "Layout store (default: $TRAJFORGE_DATA_DIR or ./layouts)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("E_USAGE", e.what());
    }

    try {
        if (*c_dec) {
            const auto canvas = parse_dims(dec_canvas, 3, "--canvas");
            const auto crop = parse_dims(dec_crop, 2, "--crop");
            dec.canvas = {canvas[0], canvas[1], canvas[2]};
            dec.crop = {crop[0], crop[1]};
            cli::run_decompose(dec);
        } else if (*c_comp) {
            if (!gate.empty()) comp.gate = gate;
            cli::run_compose(comp);
        } else if (*c_train) {
            if (!train_config.empty()) train.config = train_config;
            if (*o_steps) train.steps = train_steps;
            if (*o_seed) train.seed = train_seed;
            std::cout << cli::run_train(train).dump() << std::endl;
        } else if (*c_sample) {
            if (!sample_gate.empty()) sample.gate = sample_gate;
            cli::run_sample(sample);
        } else if (*c_eval) {
            const auto frame = parse_dims(ev_frame, 2, "--frame");
            ev.frame_width = static_cast<double>(frame[0]);
            ev.frame_height = static_cast<double>(frame[1]);
            if (!ev_frame_embed.empty()) ev.frame_embeddings = ev_frame_embed;
            if (!ev_ref_embed.empty()) ev.reference_embedding = ev_ref_embed;
            if (!ev_region_embed.empty()) ev.region_embeddings = ev_region_embed;
            if (!ev_text_embed.empty()) ev.text_embedding = ev_text_embed;
            if (!ev_out.empty()) ev.out = ev_out;
            std::cout << cli::run_eval(ev).dump(2) << std::endl;
        } else if (*c_serve) {
            if (!data_dir.empty()) serve.data_dir = data_dir;
            return cli::run_serve(serve);
        }
    } catch (const CLI::ValidationError& e) {
        return report_error("E_USAGE", e.what());
    } catch (const Error& e) {
        return report_error(e.code(), e.what());
    } catch (const std::exception& e) {
        return report_error("E_INTERNAL", e.what());
    }
    return 0;
}

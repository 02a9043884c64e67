#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajforge/decompositor.hpp"
#include "trajforge/layout.hpp"
#include "trajforge/stam.hpp"

namespace trajforge::cli {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kDefaultSeed = 20250101;

/// Process exit status for an error code ("E_INPUT" -> 2, ...).
int exit_code_for(std::string_view code) noexcept;
inline constexpr int kExitUsage = 1;

struct DecomposeArgs {
    fs::path frames;
    std::vector<fs::path> masks;
    std::vector<fs::path> tracks;
    fs::path out;
    Canvas canvas{};
    CropSize crop{};
    std::string caption;
};

/// Writes layout.json and ref_obj<i>.htf into `out`; returns the layout path.
fs::path run_decompose(const DecomposeArgs& args);

struct ComposeArgs {
    fs::path layout;
    fs::path out;
    std::optional<std::string> gate;
    std::size_t channels = 4;  // used only when the layout has no entries
    std::uint64_t seed = kDefaultSeed;
};

/// Layout plus the reference files it names (resolved next to the layout).
struct LoadedLayout {
    CompositionLayout layout;
    ReferenceMap refs;
    std::size_t channels = 0;
};
LoadedLayout load_layout(const fs::path& path, std::size_t default_channels = 4);

/// Composition with the foreground gate applied: the explicit `gate` id, or
/// the single foreground entry when there is exactly one.
ConditioningBundle condition_layout(const LoadedLayout& loaded, const std::optional<std::string>& gate);

/// Writes z_cond.htf, mask4.htf and x_in.htf (x_in built around z_t ~ N(0, I)).
void run_compose(const ComposeArgs& args);

struct TrainArgs {
    std::optional<fs::path> config;
    fs::path out;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

/// Trains and writes a checkpoint archive; returns a JSON summary.
nlohmann::json run_train(const TrainArgs& args);

struct SampleArgs {
    fs::path checkpoint;
    fs::path layout;
    fs::path out;
    std::size_t steps = 20;
    std::uint64_t seed = kDefaultSeed;
    std::optional<std::string> gate;
    bool unconditioned = false;
};

/// Writes sample.htf [T, C, H, W] and preview.ppm (frames side by side).
void run_sample(const SampleArgs& args);

struct EvalArgs {
    fs::path generated;
    fs::path target;
    double frame_width = 64.0;
    double frame_height = 64.0;
    std::optional<fs::path> frame_embeddings;   // [T, D]
    std::optional<fs::path> reference_embedding;  // [D]
    std::optional<fs::path> region_embeddings;  // [T, D]
    std::optional<fs::path> text_embedding;     // [D]
    std::optional<fs::path> out;
};

nlohmann::json run_eval(const EvalArgs& args);

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<fs::path> data_dir;
};

/// Blocks until the process is terminated.
int run_serve(const ServeArgs& args);

}  // namespace trajforge::cli

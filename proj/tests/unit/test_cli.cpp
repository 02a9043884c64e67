#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "../support/tiny_config.hpp"
#include "trajforge/flowmatch/checkpoint.hpp"
#include "trajforge/formats.hpp"
#include "trajforge/htf.hpp"

using namespace trajforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures = TRAJFORGE_FIXTURES;

struct CliRun {
    int status;
    std::string err;
};

CliRun run(const std::string& args, const fs::path& dir) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + TRAJFORGE_CLI + "\" " + args + " > \"" + (dir / "stdout.txt").string() + "\" 2> \"" + err.string() + "\"";
    const int raw = std::system(cmd.c_str());
    std::ifstream f(err);
    std::stringstream ss;
    ss << f.rdbuf();
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("trajforge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string p(const std::string& rel) const { return "\"" + (dir / rel).string() + "\""; }

    // Writes layout + reference files for square entries on a `t`x`h`x`w` canvas.
    fs::path write_layout(const std::string& name, const json& entries, std::size_t t, std::size_t h, std::size_t w,
                          std::size_t channels = 4) {
        fs::create_directories(dir / name);
        json arr = json::array();
        for (const auto& e : entries) {
            json entry = e;
            const std::string id = e["id"];
            entry["ref_file"] = id + ".htf";
            Tensor ref = e["modality"] == "image" ? Tensor({channels, 4, 4}) : Tensor({3, channels, 4, 4});
            for (std::size_t i = 0; i < ref.numel(); ++i) ref[i] = static_cast<float>((i * 37 + id.size() * 11) % 17) / 8.0f - 1.0f;
            htf::write_file(dir / name / (id + ".htf"), ref);
            arr.push_back(entry);
        }
        const fs::path path = dir / name / "layout.json";
        std::ofstream(path) << json{{"canvas", {{"t", t}, {"h", h}, {"w", w}}}, {"entries", arr}}.dump(2);
        return path;
    }

    fs::path dir;
};

json square(const std::string& id, const std::string& modality, double x, double y, double s, const std::string& prio = "none") {
    return {{"id", id},
            {"modality", modality},
            {"priority", prio},
            {"trajectory", {{"fps", 16.0}, {"anchors", json::array({{{"p", {x, y}}, {"s", {s, s}}, {"v", 1}}, {{"p", {x + 0.05, y}}, {"s", {s, s}}, {"v", 1}}})}}}};
}

}  // namespace

TEST_F(CliTest, DecomposeMatchesGolden) {
    const fs::path in = kFixtures / "square";
    const CliRun r = run("decompose --frames \"" + (in / "frames.htf").string() + "\" --masks \"" + (in / "mask.pgm").string() +
                          "\" --tracks \"" + (in / "tracks.json").string() + "\" --canvas 6,16,16 --crop 8,8 --caption \"a moving square\" --out " +
                          p("out"),
                      dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(slurp(dir / "out" / "layout.json"), slurp(kFixtures / "square_layout.json"));
    const Tensor ref = htf::read_file(dir / "out" / "ref_obj0.htf");
    EXPECT_EQ(ref.shape(), (Shape{6, 3, 8, 8}));
    // the crop window tracks the square, so its center stays on the square color
    for (std::size_t t = 0; t < 6; ++t) EXPECT_NEAR(ref.at(t, 0, 4, 4), 0.9f, 1e-5f);
}

TEST_F(CliTest, DecomposeMissingTrackFile) {
    const fs::path in = kFixtures / "square";
    const CliRun r = run("decompose --frames \"" + (in / "frames.htf").string() + "\" --masks \"" + (in / "mask.pgm").string() +
                          "\" --tracks " + p("nope.json") + " --out " + p("out"),
                      dir);
    EXPECT_EQ(r.status, 2);
    const json err = json::parse(r.err);
    EXPECT_EQ(err["error"]["code"], "E_INPUT");
    EXPECT_FALSE(fs::exists(dir / "out" / "layout.json"));
}

TEST_F(CliTest, DecomposeWithoutObjects) {
    const CliRun r = run("decompose --frames \"" + (kFixtures / "square" / "frames.htf").string() + "\" --canvas 4,8,8 --out " + p("out"), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const CompositionLayout l = layout_from_json(json::parse(slurp(dir / "out" / "layout.json")));
    EXPECT_TRUE(l.entries.empty());
    EXPECT_EQ(l.canvas.frames, 4u);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(run("compose --out " + p("x"), dir).status, 1);
    EXPECT_EQ(run("decompose --frames a --out b --canvas 4,0,8", dir).status, 1);
}

TEST_F(CliTest, ComposeEmptyLayout) {
    const fs::path l = write_layout("empty", json::array(), 3, 8, 6);
    ASSERT_EQ(run("compose --layout \"" + l.string() + "\" --channels 2 --out " + p("out"), dir).status, 0);
    const Tensor z = htf::read_file(dir / "out" / "z_cond.htf"), m = htf::read_file(dir / "out" / "mask4.htf"),
                 x = htf::read_file(dir / "out" / "x_in.htf");
    EXPECT_EQ(z.shape(), (Shape{3, 2, 8, 6}));
    EXPECT_EQ(m.shape(), (Shape{3, 4, 8, 6}));
    EXPECT_EQ(x.shape(), (Shape{3, 8, 8, 6}));
    for (float v : z.data()) EXPECT_EQ(v, 0.0f);
    for (float v : m.data()) EXPECT_EQ(v, 0.0f);
}

TEST_F(CliTest, GateWithoutOverlapChangesNothing) {
    const fs::path l = write_layout("two", json::array({square("a", "image", 0.2, 0.2, 0.25), square("b", "video", 0.7, 0.75, 0.25)}), 4, 16, 16);
    ASSERT_EQ(run("compose --layout \"" + l.string() + "\" --out " + p("plain"), dir).status, 0);
    ASSERT_EQ(run("compose --layout \"" + l.string() + "\" --gate a --out " + p("gated"), dir).status, 0);
    for (const char* f : {"z_cond.htf", "mask4.htf", "x_in.htf"}) EXPECT_EQ(slurp(dir / "plain" / f), slurp(dir / "gated" / f)) << f;
    const CliRun bad = run("compose --layout \"" + l.string() + "\" --gate zz --out " + p("bad"), dir);
    EXPECT_EQ(bad.status, 2);
}

TEST_F(CliTest, DisjointEntriesSuperpose) {
    const json a = square("a", "image", 0.2, 0.2, 0.25), b = square("b", "video", 0.7, 0.75, 0.25);
    const fs::path both = write_layout("both", json::array({a, b}), 4, 16, 16);
    const fs::path only_a = write_layout("only_a", json::array({a}), 4, 16, 16);
    const fs::path only_b = write_layout("only_b", json::array({b}), 4, 16, 16);
    for (auto [layout, out] : {std::pair{both, "o_both"}, std::pair{only_a, "o_a"}, std::pair{only_b, "o_b"}}) {
        ASSERT_EQ(run("compose --layout \"" + layout.string() + "\" --out " + p(out), dir).status, 0);
    }
    for (const char* f : {"z_cond.htf", "mask4.htf"}) {
        const Tensor s = htf::read_file(dir / "o_both" / f), x = htf::read_file(dir / "o_a" / f), y = htf::read_file(dir / "o_b" / f);
        const bool mask = std::string(f) == "mask4.htf";
        for (std::size_t i = 0; i < s.numel(); ++i) {
            // union channels clamp at 1, which disjoint boxes never reach twice
            const float expect = mask ? std::min(1.0f, x[i] + y[i]) : x[i] + y[i];
            ASSERT_NEAR(s[i], expect, 1e-6f) << f << " at " << i;
        }
    }
}

TEST_F(CliTest, TrainZeroStepsEqualsInitialization) {
    const fm::TrainConfig tc = fixtures::tiny_train_config();
    std::ofstream(dir / "cfg.json") << fm::to_json(tc).dump();
    const CliRun r = run("train --config " + p("cfg.json") + " --steps 0 --seed 9 --out " + p("ck.tar"), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const fm::Checkpoint ck = fm::load_checkpoint(dir / "ck.tar");
    EXPECT_EQ(ck.step, 0u);
    const fm::MicroDenoiser<float> init(tc.model, 9);
    const auto a = ck.params.named(), b = init.params().named();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].second, *b[i].second) << a[i].first;
}

TEST_F(CliTest, TrainAndSampleAreDeterministic) {
    const fm::TrainConfig tc = fixtures::tiny_train_config();
    std::ofstream(dir / "cfg.json") << fm::to_json(tc).dump();
    ASSERT_EQ(run("train --quiet --config " + p("cfg.json") + " --steps 2 --out " + p("a.tar"), dir).status, 0);
    ASSERT_EQ(run("train --quiet --config " + p("cfg.json") + " --steps 2 --out " + p("b.tar"), dir).status, 0);
    EXPECT_EQ(slurp(dir / "a.tar"), slurp(dir / "b.tar"));

    const fs::path l = write_layout("lay", json::array({square("a", "video", 0.4, 0.5, 0.5)}), 2, 8, 8);
    for (const char* out : {"s1", "s2"}) {
        const CliRun r = run("sample --ckpt " + p("a.tar") + " --layout \"" + l.string() + "\" --steps 3 --seed 5 --out " + p(out), dir);
        ASSERT_EQ(r.status, 0) << r.err;
    }
    EXPECT_EQ(slurp(dir / "s1" / "sample.htf"), slurp(dir / "s2" / "sample.htf"));
    EXPECT_EQ(slurp(dir / "s1" / "preview.ppm"), slurp(dir / "s2" / "preview.ppm"));
    EXPECT_EQ(htf::read_file(dir / "s1" / "sample.htf").shape(), (Shape{2, 4, 8, 8}));
    EXPECT_EQ(slurp(dir / "s1" / "preview.ppm").substr(0, 2), "P6");

    const fs::path wrong = write_layout("wrong", json::array(), 3, 8, 8);
    EXPECT_EQ(run("sample --ckpt " + p("a.tar") + " --layout \"" + wrong.string() + "\" --out " + p("s3"), dir).status, 3);
}

TEST_F(CliTest, EvalOnSelf) {
    const json boxes = json::array({{{"frame", 0}, {"box", {1, 2, 10, 12}}}, {{"frame", 1}, {"box", {3, 2, 12, 12}}}});
    std::ofstream(dir / "boxes.json") << boxes.dump();
    const CliRun r = run("eval --gen " + p("boxes.json") + " --target " + p("boxes.json") + " --out " + p("report.json"), dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const json rep = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(rep["miou"].get<double>(), 1.0);
    EXPECT_EQ(rep["cd"].get<double>(), 0.0);
    EXPECT_EQ(rep["frames_used"], 2);
}

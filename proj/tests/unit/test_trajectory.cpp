#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "trajforge/error.hpp"
#include "trajforge/trajectory.hpp"

using namespace trajforge;

namespace {

ObjectMask rect_mask(std::size_t w, std::size_t h, std::size_t x0, std::size_t y0, std::size_t rw, std::size_t rh) {
    ObjectMask m(w, h);
    for (std::size_t y = y0; y < y0 + rh; ++y) {
        for (std::size_t x = x0; x < x0 + rw; ++x) m.set(x, y, true);
    }
    return m;
}

PointTracks make_tracks(const std::vector<std::vector<Vec2>>& per_frame, std::size_t w = 100, std::size_t h = 100,
                        std::size_t t_ref = 0) {
    PointTracks tr;
    tr.width = w;
    tr.height = h;
    tr.t_ref = t_ref;
    const std::size_t k = per_frame.front().size();
    tr.tracks.resize(k);
    for (const auto& frame : per_frame) {
        for (std::size_t i = 0; i < k; ++i) {
            tr.tracks[i].xy.push_back(frame[i]);
            tr.tracks[i].conf.push_back(1.0);
        }
    }
    return tr;
}

std::vector<Vec2> transform(const std::vector<Vec2>& pts, double ax, double ay, double angle, Vec2 shift) {
    std::vector<Vec2> out;
    for (const auto& p : pts) {
        const double x = p.x * ax, y = p.y * ay;
        out.push_back({std::cos(angle) * x - std::sin(angle) * y + shift.x, std::sin(angle) * x + std::cos(angle) * y + shift.y});
    }
    return out;
}

const std::vector<Vec2> kCluster = {{3.0, 1.0}, {-2.0, 4.0}, {-1.5, -3.0}, {5.0, -2.5}, {0.5, 0.25}};

}  // namespace

TEST(SampleAnchors, SmallObjectGivesCentroid) {
    const ObjectMask m = rect_mask(32, 32, 4, 6, 10, 10);
    const auto pts = sample_anchors(m, {256.0, 16});
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_DOUBLE_EQ(pts[0].x, 9.0);
    EXPECT_DOUBLE_EQ(pts[0].y, 11.0);
}

TEST(SampleAnchors, WideRectangleSplitsIntoQuarters) {
    const ObjectMask m = rect_mask(64, 16, 0, 0, 64, 16);
    const auto grid = choose_partition(4, 64, 16);
    EXPECT_EQ(grid.rows, 1u);
    EXPECT_EQ(grid.cols, 4u);
    const auto pts = sample_anchors(m, {256.0, 16});
    ASSERT_EQ(pts.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(pts[i].x, 8.0 + 16.0 * static_cast<double>(i));
        EXPECT_DOUBLE_EQ(pts[i].y, 8.0);
    }
}

TEST(SampleAnchors, RingSkipsEmptyCells) {
    ObjectMask m(64, 64);
    for (std::size_t y = 0; y < 64; ++y) {
        for (std::size_t x = 0; x < 64; ++x) m.set(x, y, x < 4 || y < 4 || x >= 60 || y >= 60);
    }
    const AnchorSamplingOptions opt{64.0, 16};
    const auto k = static_cast<std::size_t>(std::round(static_cast<double>(m.area()) / 64.0));
    const auto grid = choose_partition(k, 64, 64);
    EXPECT_EQ(grid.rows * grid.cols, k);
    const auto pts = sample_anchors(m, opt);
    EXPECT_LT(pts.size(), k);

    // brute force: assign each pixel to its cell, keep nonempty cells in row-major order
    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    std::vector<std::size_t> n(k, 0);
    auto cell_of = [](std::size_t j, std::size_t extent, std::size_t parts) {
        std::size_t c = 0;
        while (c + 1 < parts && (c + 1) * extent / parts <= j) ++c;
        return c;
    };
    for (std::size_t y = 0; y < 64; ++y) {
        for (std::size_t x = 0; x < 64; ++x) {
            if (!m.at(x, y)) continue;
            const std::size_t cell = cell_of(y, 64, grid.rows) * grid.cols + cell_of(x, 64, grid.cols);
            sx[cell] += x + 0.5;
            sy[cell] += y + 0.5;
            ++n[cell];
        }
    }
    std::vector<Vec2> expect;
    for (std::size_t c = 0; c < k; ++c) {
        if (n[c]) expect.push_back({sx[c] / n[c], sy[c] / n[c]});
    }
    ASSERT_EQ(pts.size(), expect.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_NEAR(pts[i].x, expect[i].x, 1e-12);
        EXPECT_NEAR(pts[i].y, expect[i].y, 1e-12);
    }
}

TEST(SampleAnchors, PointsInsideBoundsAndThresholdRule) {
    std::mt19937 rng(5);
    std::uniform_int_distribution<std::size_t> pos(0, 40), ext(1, 24);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t x0 = pos(rng), y0 = pos(rng), w = ext(rng), h = ext(rng);
        const ObjectMask m = rect_mask(64, 64, x0, y0, w, h);
        const AnchorSamplingOptions opt{100.0, 16};
        const auto pts = sample_anchors(m, opt);
        const PixelBounds b = mask_bounds(m);
        for (const auto& p : pts) {
            EXPECT_GE(p.x, static_cast<double>(b.x0));
            EXPECT_LE(p.x, static_cast<double>(b.x1 + 1));
            EXPECT_GE(p.y, static_cast<double>(b.y0));
            EXPECT_LE(p.y, static_cast<double>(b.y1 + 1));
        }
        if (static_cast<double>(w * h) < opt.min_patch_area) {
            EXPECT_EQ(pts.size(), 1u);
        }
    }
    EXPECT_THROW(sample_anchors(ObjectMask(8, 8)), DomainError);
}

TEST(ChoosePartition, TiesFavorColumns) {
    const auto g = choose_partition(2, 10, 10);
    EXPECT_EQ(g.rows, 1u);
    EXPECT_EQ(g.cols, 2u);
    const auto tall = choose_partition(4, 16, 64);
    EXPECT_EQ(tall.rows, 4u);
    EXPECT_EQ(tall.cols, 1u);
}

TEST(ScaleFactor, RigidMotionKeepsOne) {
    for (double angle : {0.0, 0.3, 1.7, std::numbers::pi}) {
        const auto tr = make_tracks({kCluster, transform(kCluster, 1, 1, angle, {12.0, -7.0})});
        EXPECT_NEAR(scale_factor(tr, 1), 1.0, 1e-6) << angle;
    }
}

TEST(ScaleFactor, UniformDilation) {
    for (double a : {0.5, 1.0, 2.0, 4.0}) {
        const auto tr = make_tracks({kCluster, transform(kCluster, a, a, 0.0, {3.0, 3.0})});
        EXPECT_NEAR(scale_factor(tr, 1), a, 1e-5 * a) << a;
    }
}

TEST(ScaleFactor, AnisotropicSqueeze) {
    const std::vector<Vec2> diamond = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const auto tr = make_tracks({diamond, transform(diamond, 2.0, 0.5, 0.0, {0, 0})});
    EXPECT_NEAR(scale_factor(tr, 1), 1.25, 1e-5);
}

TEST(ScaleFactor, ComposedDilationsMultiply) {
    const auto once = transform(kCluster, 1.5, 1.5, 0.2, {1, 2});
    const auto twice = transform(once, 2.5, 2.5, -0.7, {-4, 0});
    const auto tr = make_tracks({kCluster, once, twice});
    EXPECT_NEAR(scale_factor(tr, 2), 1.5 * 2.5, 1e-4);
}

TEST(ScaleFactor, SinglePointIsOne) {
    const auto tr = make_tracks({{{1, 1}}, {{50, 60}}});
    EXPECT_EQ(scale_factor(tr, 1), 1.0);
}

TEST(ScaleFactor, PointOnTheCentroidIsSkipped) {
    // 3x3 grid with its middle point exactly on the centroid, dilated by 2
    std::vector<Vec2> ref, big;
    for (double y : {-1.0, 0.0, 1.0}) {
        for (double x : {-1.0, 0.0, 1.0}) {
            ref.push_back({10 + x, 10 + y});
            big.push_back({30 + 2 * x, 20 + 2 * y});
        }
    }
    const auto tr = make_tracks({ref, ref, big});
    EXPECT_NEAR(scale_factor(tr, 1), 1.0, 1e-6);
    EXPECT_NEAR(scale_factor(tr, 2), 2.0, 1e-5);
    EXPECT_EQ(scale_factor(make_tracks({{{4, 4}, {4, 4}}, {{5, 5}, {9, 1}}}), 1), 1.0);
}

TEST(ExtractTrajectory, StaticObject) {
    const ObjectMask m = rect_mask(100, 80, 20, 10, 40, 30);
    const auto anchors = sample_anchors(m, {256.0, 16});
    std::vector<std::vector<Vec2>> frames(6, anchors);
    auto tr = make_tracks(frames, 100, 80, 2);
    ObjectMask at_ref = m;
    at_ref.frame = 2;
    const Trajectory traj = extract_trajectory(tr, at_ref);
    ASSERT_EQ(traj.size(), 6u);
    const Vec2 c = mask_centroid(m);
    for (std::size_t t = 0; t < 6; ++t) {
        EXPECT_NEAR(traj[t].p.x, c.x / 100.0, 1e-12);
        EXPECT_NEAR(traj[t].p.y, c.y / 80.0, 1e-12);
        EXPECT_NEAR(traj[t].s.x, 40.0 / 100.0, 1e-6);
        EXPECT_NEAR(traj[t].s.y, 30.0 / 80.0, 1e-6);
        EXPECT_TRUE(traj[t].visible);
    }
}

TEST(ExtractTrajectory, ZeroConfidenceHidesFrames) {
    const ObjectMask m = rect_mask(64, 64, 10, 10, 20, 20);
    std::vector<std::vector<Vec2>> frames(12, std::vector<Vec2>{{15, 15}, {25, 25}, {15, 25}});
    auto tr = make_tracks(frames, 64, 64, 0);
    for (auto& track : tr.tracks) {
        for (std::size_t t = 5; t <= 9; ++t) track.conf[t] = 0.0;
    }
    const Trajectory traj = extract_trajectory(tr, m);
    for (std::size_t t = 0; t < 12; ++t) EXPECT_EQ(traj[t].visible, t < 5 || t > 9) << t;
}

TEST(ExtractTrajectory, LinearZoomRampsScale) {
    const ObjectMask m = rect_mask(200, 200, 90, 90, 20, 20);
    const std::vector<Vec2> base = {{95, 95}, {105, 95}, {95, 105}, {105, 105}};
    const std::size_t t_n = 9;
    std::vector<std::vector<Vec2>> frames;
    for (std::size_t t = 0; t < t_n; ++t) {
        const double a = 1.0 + static_cast<double>(t) / (t_n - 1);
        std::vector<Vec2> f;
        for (const auto& p : base) f.push_back({100 + a * (p.x - 100), 100 + a * (p.y - 100)});
        frames.push_back(f);
    }
    const Trajectory traj = extract_trajectory(make_tracks(frames, 200, 200, 0), m);
    for (std::size_t t = 0; t < t_n; ++t) {
        const double a = 1.0 + static_cast<double>(t) / (t_n - 1);
        EXPECT_NEAR(traj[t].s.x, a * 0.1, 1e-4);
        EXPECT_NEAR(traj[t].s.y, a * 0.1, 1e-4);
    }
}

TEST(ExtractTrajectory, AnchorsStayValidOnRandomTracks) {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> wild(-80.0, 180.0), conf(0.0, 1.0);
    const ObjectMask m = rect_mask(100, 100, 5, 5, 90, 90);
    for (int trial = 0; trial < 100; ++trial) {
        PointTracks tr;
        tr.width = tr.height = 100;
        tr.tracks.resize(1 + trial % 6);
        for (auto& track : tr.tracks) {
            for (int t = 0; t < 7; ++t) {
                track.xy.push_back({wild(rng), wild(rng)});
                track.conf.push_back(conf(rng));
            }
        }
        const Trajectory traj = extract_trajectory(tr, m);
        for (const auto& a : traj.anchors()) EXPECT_TRUE(a.valid());
    }
}

TEST(ExtractTrajectory, RejectsBadInputs) {
    auto tr = make_tracks({{{1, 1}, {2, 2}}}, 10, 10, 0);
    EXPECT_THROW(extract_trajectory(tr, ObjectMask(10, 10)), DomainError);
    ObjectMask wrong_frame = rect_mask(10, 10, 0, 0, 3, 3);
    wrong_frame.frame = 1;
    EXPECT_ANY_THROW(extract_trajectory(tr, wrong_frame));
}

TEST(ResampleTrajectory, IdentityAndConstant) {
    std::vector<TrajectoryAnchor> anchors;
    for (int t = 0; t < 5; ++t) anchors.push_back({{0.1 * t, 0.5}, {0.2, 0.3}, t != 2});
    const Trajectory traj(anchors, 16.0);
    EXPECT_EQ(resample_trajectory(traj, 5), traj);

    const Trajectory c = Trajectory::constant({{0.3, 0.7}, {0.25, 0.5}, true}, 4);
    for (std::size_t n : {1u, 3u, 11u}) {
        const Trajectory r = resample_trajectory(c, n);
        ASSERT_EQ(r.size(), n);
        for (const auto& a : r.anchors()) {
            EXPECT_DOUBLE_EQ(a.p.x, 0.3);
            EXPECT_DOUBLE_EQ(a.s.y, 0.5);
        }
    }
}

TEST(ResampleTrajectory, EndpointAlignedRamp) {
    std::vector<TrajectoryAnchor> anchors;
    for (int t = 0; t < 9; ++t) anchors.push_back({{t / 8.0, 0.0}, {0.5, 0.5}, true});
    const Trajectory r = resample_trajectory(Trajectory(anchors, 16.0), 5);
    const double expect[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r[i].p.x, expect[i], 1e-12);
}

TEST(Trajectory, ValidatesAnchors) {
    EXPECT_THROW(Trajectory({}, 16.0), DomainError);
    EXPECT_THROW(Trajectory({{{1.5, 0.5}, {0.5, 0.5}, true}}, 16.0), DomainError);
    EXPECT_THROW(Trajectory({{{0.5, 0.5}, {0.0, 0.5}, true}}, 16.0), DomainError);
}

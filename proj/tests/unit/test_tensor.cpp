#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trajforge/error.hpp"
#include "trajforge/tensor.hpp"

using namespace trajforge;

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    Tensor t(shape);
    for (float& x : t.data()) x = u(rng);
    return t;
}

SamplingGrid constant_grid(std::size_t h, std::size_t w, float gx, float gy) {
    Tensor g({h, w, 2});
    for (std::size_t i = 0; i < h * w; ++i) {
        g[2 * i] = gx;
        g[2 * i + 1] = gy;
    }
    return SamplingGrid(g);
}

// Reference bilinear sampler written directly from the convention: centered
// coordinate g maps to continuous pixel position (g + 0.5) * N - 0.5, taps
// outside the source read as zero.
double oracle_sample(const Tensor& src, std::size_t c, double gx, double gy) {
    const auto hs = static_cast<long>(src.extent(1)), ws = static_cast<long>(src.extent(2));
    const double x = (gx + 0.5) * static_cast<double>(ws) - 0.5, y = (gy + 0.5) * static_cast<double>(hs) - 0.5;
    const long x0 = static_cast<long>(std::floor(x)), y0 = static_cast<long>(std::floor(y));
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    auto tap = [&](long xx, long yy) {
        if (xx < 0 || yy < 0 || xx >= ws || yy >= hs) return 0.0;
        return static_cast<double>(src.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
    };
    return (1 - fx) * (1 - fy) * tap(x0, y0) + fx * (1 - fy) * tap(x0 + 1, y0) + (1 - fx) * fy * tap(x0, y0 + 1) +
           fx * fy * tap(x0 + 1, y0 + 1);
}

}  // namespace

TEST(Tensor, RejectsZeroExtentAndNonFinite) {
    EXPECT_THROW(Tensor({2, 0, 3}), DimensionError);
    EXPECT_THROW(Tensor({2}, std::vector<float>{1.0f, NAN}), DomainError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1.0f}), DimensionError);
}

TEST(Tensor, ReshapeKeepsData) {
    Tensor t({2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5});
    const Tensor r = t.reshaped({3, 2});
    EXPECT_EQ(r.shape(), (Shape{3, 2}));
    EXPECT_EQ(r[5], 5.0f);
    EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(GridSample, IdentityGridReproducesSource) {
    std::mt19937 rng(1);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {4, 4}, {7, 5}, {64, 64}}) {
        const Tensor src = random_tensor({3, h, w}, rng);
        EXPECT_EQ(grid_sample(src, SamplingGrid::identity(h, w)), src) << h << "x" << w;
    }
}

TEST(GridSample, CenterOfTwoByTwoIsMean) {
    const Tensor src({2, 2, 2}, std::vector<float>{1, 2, 3, 4, 1, 2, 3, 4});
    const Tensor out = grid_sample(src, constant_grid(3, 5, 0.0f, 0.0f));
    for (float v : out.data()) EXPECT_FLOAT_EQ(v, 2.5f);
}

TEST(GridSample, FarOutsideIsZero) {
    std::mt19937 rng(2);
    const Tensor out = grid_sample(random_tensor({2, 4, 4}, rng), constant_grid(3, 3, 10.0f, 10.0f));
    for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GridSample, MatchesBruteForceSampler) {
    std::mt19937 rng(3);
    const Tensor src = random_tensor({2, 5, 7}, rng);
    Tensor g = random_tensor({6, 4, 2}, rng, -0.8f, 0.8f);
    const Tensor out = grid_sample(src, SamplingGrid(g));
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < 24; ++i) {
            EXPECT_NEAR(out[c * 24 + i], oracle_sample(src, c, g[2 * i], g[2 * i + 1]), 1e-5);
        }
    }
}

TEST(GridSample, TimedGridAddsFrameAxis) {
    std::mt19937 rng(4);
    const Tensor src = random_tensor({3, 4, 4}, rng);
    Tensor g({2, 4, 4, 2});
    const Tensor id = SamplingGrid::identity(4, 4).values();
    std::copy(id.data().begin(), id.data().end(), g.data().begin());
    std::fill(g.data().begin() + 32, g.data().end(), 10.0f);
    const Tensor out = grid_sample(src, SamplingGrid(g));
    ASSERT_EQ(out.shape(), (Shape{2, 3, 4, 4}));
    for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(out[i], src[i]);
    for (std::size_t i = 48; i < 96; ++i) EXPECT_EQ(out[i], 0.0f);
}

TEST(GridSample, BoundedBySourceAndZero) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor src = random_tensor({1, 6, 6}, rng, 0.5f, 2.0f);
        const Tensor out = grid_sample(src, SamplingGrid(random_tensor({5, 5, 2}, rng, -1.0f, 1.0f)));
        for (float v : out.data()) {
            EXPECT_GE(v, 0.0f);
            EXPECT_LE(v, 2.0f);
        }
    }
}

TEST(GridSample, LinearInSource) {
    std::mt19937 rng(6);
    const Tensor x = random_tensor({2, 5, 5}, rng), y = random_tensor({2, 5, 5}, rng);
    const SamplingGrid g(random_tensor({4, 4, 2}, rng, -0.7f, 0.7f));
    const float a = 0.75f, b = -1.5f;
    Tensor mix({2, 5, 5});
    for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] = a * x[i] + b * y[i];
    const Tensor lhs = grid_sample(mix, g), sx = grid_sample(x, g), sy = grid_sample(y, g);
    for (std::size_t i = 0; i < lhs.numel(); ++i) {
        const float rhs = a * sx[i] + b * sy[i];
        EXPECT_NEAR(lhs[i], rhs, 4 * std::numeric_limits<float>::epsilon() * std::max(1.0f, std::abs(rhs)) * 4);
    }
}

TEST(GridSample, RejectsMalformedGrid) {
    EXPECT_THROW(SamplingGrid(Tensor({4, 4, 3})), DimensionError);
    EXPECT_THROW(grid_sample(Tensor({4, 4}), SamplingGrid::identity(2, 2)), DimensionError);
}

TEST(TemporalResample, SameLengthIsIdentity) {
    std::mt19937 rng(7);
    const Tensor clip = random_tensor({5, 2, 3, 3}, rng);
    EXPECT_EQ(temporal_resample(clip, 5), clip);
}

TEST(TemporalResample, MidpointOfTwoFrames) {
    Tensor clip({2, 1, 2, 2});
    std::fill(clip.data().begin(), clip.data().begin() + 4, 1.0f);
    std::fill(clip.data().begin() + 4, clip.data().end(), 4.0f);
    const Tensor out = temporal_resample(clip, 3);
    for (std::size_t i = 4; i < 8; ++i) EXPECT_FLOAT_EQ(out[i], 2.5f);
}

TEST(TemporalResample, RampMatchesBruteForce) {
    Tensor clip({5, 2, 3, 2});
    const std::size_t per = 12;
    for (std::size_t t = 0; t < 5; ++t) std::fill_n(clip.data().begin() + t * per, per, static_cast<float>(t));
    const Tensor out = temporal_resample(clip, 9);
    for (std::size_t j = 0; j < 9; ++j) {
        const double pos = static_cast<double>(j) * 4.0 / 8.0;
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min<std::size_t>(lo + 1, 4);
        const double w = pos - static_cast<double>(lo);
        for (std::size_t i = 0; i < per; ++i) {
            const double expect = (1 - w) * clip[lo * per + i] + w * clip[hi * per + i];
            EXPECT_NEAR(out[j * per + i], expect, 1e-6);
            EXPECT_NEAR(out[j * per + i], j / 2.0, 1e-6);
        }
    }
}

TEST(TemporalResample, SingleFrameBroadcasts) {
    std::mt19937 rng(8);
    const Tensor clip = random_tensor({1, 2, 2, 2}, rng);
    const Tensor out = temporal_resample(clip, 4);
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(out[t * 8 + i], clip[i]);
    }
}

TEST(TemporalResample, ExactOnAffineClips) {
    Tensor clip({4, 1, 1, 3});
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t x = 0; x < 3; ++x) clip.at(t, 0, 0, x) = 0.5f * static_cast<float>(t) + static_cast<float>(x);
    }
    const Tensor out = temporal_resample(clip, 7);
    for (std::size_t j = 0; j < 7; ++j) {
        for (std::size_t x = 0; x < 3; ++x) EXPECT_NEAR(out.at(j, 0, 0, x), 0.5 * (j * 3.0 / 6.0) + x, 1e-6);
    }
}

TEST(BroadcastTime, FramesEqualImage) {
    std::mt19937 rng(9);
    const Tensor img = random_tensor({2, 3, 4}, rng);
    const Tensor one = broadcast_time(img, 1);
    EXPECT_EQ(one.shape(), (Shape{1, 2, 3, 4}));
    EXPECT_TRUE(std::equal(one.data().begin(), one.data().end(), img.data().begin()));
    const Tensor four = broadcast_time(img, 4);
    for (std::size_t t = 0; t < 4; ++t) {
        EXPECT_TRUE(std::equal(img.data().begin(), img.data().end(), four.data().begin() + t * img.numel()));
    }
}

TEST(BroadcastTime, StaysConstantUnderResampling) {
    std::mt19937 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor img = random_tensor({2, 3, 3}, rng);
        const Tensor out = temporal_resample(broadcast_time(img, 1 + trial % 5), 1 + (trial * 7) % 11);
        for (std::size_t t = 0; t < out.extent(0); ++t) {
            for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_FLOAT_EQ(out[t * img.numel() + i], img[i]);
        }
    }
}

TEST(ConcatChannels, SinglePartIsIdentity) {
    std::mt19937 rng(11);
    const Tensor a = random_tensor({2, 3, 4, 4}, rng);
    EXPECT_EQ(concat_channels({a}), a);
}

TEST(ConcatChannels, SliceRoundTrip) {
    std::mt19937 rng(12);
    const Tensor a = random_tensor({3, 4, 2, 5}, rng), b = random_tensor({3, 4, 2, 5}, rng);
    const Tensor ab = concat_channels({a, b});
    EXPECT_EQ(ab.shape(), (Shape{3, 8, 2, 5}));
    EXPECT_EQ(slice_channels(ab, 0, 4), a);
    EXPECT_EQ(slice_channels(ab, 4, 4), b);
}

TEST(ConcatChannels, ConditioningLayoutWidth) {
    const Tensor out = concat_channels({Tensor({2, 16, 3, 3}), Tensor({2, 4, 3, 3}), Tensor({2, 16, 3, 3})});
    EXPECT_EQ(out.extent(1), 36u);
}

TEST(ConcatChannels, MismatchThrows) {
    EXPECT_THROW(concat_channels({Tensor({2, 1, 3, 3}), Tensor({2, 1, 3, 4})}), DimensionError);
    EXPECT_THROW(concat_channels({Tensor({2, 1, 3, 3}), Tensor({3, 1, 3, 3})}), DimensionError);
}

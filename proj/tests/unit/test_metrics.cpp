#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trajforge/error.hpp"
#include "trajforge/metrics.hpp"

using namespace trajforge;
using namespace trajforge::metrics;

namespace {

Box box(double x0, double y0, double x1, double y1, std::size_t f = 0) { return {x0, y0, x1, y1, f}; }

// Integer coordinates keep every intermediate exact, so shifted and unshifted
// evaluations can be compared with ==.
Box random_box(std::mt19937& rng) {
    std::uniform_int_distribution<int> c(0, 400), e(0, 200);
    const double x = c(rng), y = c(rng);
    return box(x, y, x + e(rng), y + e(rng));
}

Box shifted(Box b, double dx, double dy) {
    b.x_min += dx;
    b.x_max += dx;
    b.y_min += dy;
    b.y_max += dy;
    return b;
}

double brute_iou(const Box& a, const Box& b) {
    // area by counting half-unit cells of the integer lattice
    long inter = 0, uni = 0;
    for (double y = 0; y < 700; y += 1.0) {
        for (double x = 0; x < 700; x += 1.0) {
            const double cx = x + 0.5, cy = y + 0.5;
            const bool ia = cx > a.x_min && cx < a.x_max && cy > a.y_min && cy < a.y_max;
            const bool ib = cx > b.x_min && cx < b.x_max && cy > b.y_min && cy < b.y_max;
            inter += ia && ib;
            uni += ia || ib;
        }
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace

TEST(Miou, Examples) {
    const std::vector<Box> a = {box(0, 0, 1, 1, 0), box(2, 2, 3, 3, 1)};
    EXPECT_EQ(miou(a, a), 1.0);
    const std::vector<Box> far = {box(5, 5, 6, 6, 0), box(9, 9, 10, 10, 1)};
    EXPECT_EQ(miou(a, far), 0.0);
    const std::vector<Box> half = {box(0.5, 0, 1.5, 1, 0), box(2.5, 2, 3.5, 3, 1)};
    EXPECT_DOUBLE_EQ(miou(a, half), 1.0 / 3.0);
}

TEST(Miou, DegenerateBoxes) {
    EXPECT_EQ(iou(box(3, 7, 3, 7), box(3, 7, 3, 7)), 1.0);
    EXPECT_EQ(iou(box(3, 7, 3, 7), box(4, 7, 4, 7)), 0.0);
    EXPECT_EQ(iou(box(3, 7, 3, 7), box(0, 0, 10, 10)), 0.0);
}

TEST(Miou, LengthMismatchThrows) {
    const std::vector<Box> a(2), b(3);
    EXPECT_THROW(miou(a, b), DimensionError);
    EXPECT_THROW(centroid_distance(a, b, 10, 10), DimensionError);
}

TEST(Miou, AbsentFramesAreExcludedAndCounted) {
    BoxTrack g = {box(0, 0, 2, 2), std::nullopt, box(0, 0, 2, 2)};
    BoxTrack t = {box(0, 0, 2, 2), box(0, 0, 2, 2), box(1, 0, 3, 2)};
    const FrameMean m = miou(g, t);
    EXPECT_EQ(m.frames_used, 2u);
    EXPECT_EQ(m.frames_absent, 1u);
    EXPECT_DOUBLE_EQ(m.value, (1.0 + 1.0 / 3.0) / 2.0);
    EXPECT_TRUE(std::isnan(miou(BoxTrack{std::nullopt}, BoxTrack{box(0, 0, 1, 1)}).value));
}

TEST(CentroidDistance, Examples) {
    const std::vector<Box> a = {box(10, 10, 20, 20), box(100, 50, 140, 90)};
    EXPECT_EQ(centroid_distance(a, a, 640, 480), 0.0);
    const std::vector<Box> b = {shifted(a[0], 32, 24), shifted(a[1], 32, 24)};
    EXPECT_DOUBLE_EQ(centroid_distance(a, b, 640, 480), 0.05);
    const std::vector<Box> corner = {box(0, 0, 0, 0)}, opposite = {box(640, 480, 640, 480)};
    EXPECT_DOUBLE_EQ(centroid_distance(corner, opposite, 640, 480), 1.0);
    EXPECT_THROW(centroid_distance(corner, opposite, 0, 480), DomainError);
}

TEST(MetricProperties, SymmetricTranslationCovariantAndBounded) {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> shift(-300, 300);
    for (int i = 0; i < 1000; ++i) {
        const Box a = random_box(rng), b = random_box(rng);
        const double dx = shift(rng), dy = shift(rng);
        const double v = iou(a, b);
        ASSERT_EQ(v, iou(b, a));
        ASSERT_EQ(v, iou(shifted(a, dx, dy), shifted(b, dx, dy)));
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        const std::vector<Box> ga = {a}, gb = {b}, sa = {shifted(a, dx, dy)}, sb = {shifted(b, dx, dy)};
        const double cd = centroid_distance(ga, gb, 832, 480);
        ASSERT_EQ(cd, centroid_distance(gb, ga, 832, 480));
        ASSERT_EQ(cd, centroid_distance(sa, sb, 832, 480));
    }
}

TEST(MetricProperties, IouMatchesLatticeCount) {
    std::mt19937 rng(12);
    for (int i = 0; i < 25; ++i) {
        const Box a = random_box(rng), b = random_box(rng);
        EXPECT_NEAR(iou(a, b), brute_iou(a, b), 1e-12);
    }
}

TEST(TemporalConsistency, Examples) {
    EXPECT_DOUBLE_EQ(temporal_consistency(EmbeddingSequence({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}, "t")), 1.0);
    EXPECT_DOUBLE_EQ(temporal_consistency(EmbeddingSequence({{1, -2}, {-1, 2}, {1, -2}, {-1, 2}}, "t")), -1.0);
    EXPECT_NEAR(temporal_consistency(EmbeddingSequence({{1, 0}, {0, 3}, {-2, 0}}, "t")), 0.0, 1e-6);
    EXPECT_THROW(temporal_consistency(EmbeddingSequence({{1, 0}}, "t")), DomainError);
    EXPECT_THROW(EmbeddingSequence({{1, 0}, {0, 0}}, "t"), DomainError);
}

TEST(RegionSimilarity, Examples) {
    const std::vector<double> ref = {0, 2, 0};
    EXPECT_DOUBLE_EQ(region_similarity(ref, EmbeddingSequence({{0, 1, 0}, {0, 5, 0}}, "r")), 1.0);
    EXPECT_NEAR(region_similarity(ref, EmbeddingSequence({{1, 0, 0}, {0, 0, 4}}, "r")), 0.0, 1e-15);
    EXPECT_NEAR(region_similarity(ref, EmbeddingSequence({{0, 1, 0}, {1, 0, 0}, {0, 3, 0}, {0, 0, 1}}, "r")), 0.5, 1e-6);
    EXPECT_THROW(region_similarity(ref, EmbeddingSequence({{1, 0}}, "r")), DimensionError);
}

TEST(TextAlignment, AveragesFramesFirst) {
    const EmbeddingSequence frames({{1, 0}, {0, 1}}, "f");
    EXPECT_NEAR(text_alignment(std::vector<double>{1, 1}, frames), 1.0, 1e-12);
}

TEST(BoxesFromMasks, Examples) {
    ObjectMask full(8, 6, 0);
    std::fill(full.pixels.begin(), full.pixels.end(), 1);
    ObjectMask dot(10, 10, 1);
    dot.set(3, 7, true);
    ObjectMask empty(4, 4, 2);
    const std::vector<ObjectMask> masks = {full, dot, empty};
    const BoxTrack b = boxes_from_masks(masks);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_EQ(*b[0], box(0, 0, 7, 5, 0));
    EXPECT_EQ(*b[1], box(3, 7, 3, 7, 1));
    EXPECT_FALSE(b[2].has_value());
}

TEST(BoxesFromMasks, LShapeMatchesScan) {
    ObjectMask l(20, 20, 0);
    for (std::size_t y = 4; y < 15; ++y) l.set(5, y, true);
    for (std::size_t x = 5; x < 12; ++x) l.set(x, 14, true);
    std::size_t x0 = 99, y0 = 99, x1 = 0, y1 = 0;
    for (std::size_t y = 0; y < 20; ++y) {
        for (std::size_t x = 0; x < 20; ++x) {
            if (!l.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    const std::vector<ObjectMask> masks = {l};
    EXPECT_EQ(*boxes_from_masks(masks)[0], box(x0, y0, x1, y1));
}

TEST(BoxesFromMasks, InvertsMaskFromBox) {
    std::mt19937 rng(13);
    std::uniform_int_distribution<int> c(0, 30);
    for (int i = 0; i < 200; ++i) {
        int x0 = c(rng), x1 = c(rng), y0 = c(rng), y1 = c(rng);
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        const Box b = box(x0, y0, x1, y1, 4);
        const std::vector<ObjectMask> masks = {mask_from_box(b, 32, 32)};
        ASSERT_EQ(*boxes_from_masks(masks)[0], b);
    }
}

TEST(CropRegions, UsesTargetBoxes) {
    Tensor frames({2, 1, 4, 4});
    for (std::size_t i = 0; i < frames.numel(); ++i) frames[i] = static_cast<float>(i);
    const auto crops = crop_regions(frames, {box(1, 1, 2, 3), std::nullopt});
    ASSERT_TRUE(crops[0].has_value());
    EXPECT_EQ(crops[0]->shape(), (Shape{1, 3, 2}));
    EXPECT_EQ(crops[0]->at(0, 0, 0), 5.0f);
    EXPECT_FALSE(crops[1].has_value());
}

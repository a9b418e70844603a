#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace cellmorph;

namespace {

Image rod_scene(int size, int rods, std::uint64_t seed) {
    Rng rng(seed);
    Image img(size, size, 0.2);
    for (int k = 0; k < rods; ++k) {
        const double cx = rng.uniform(10, size - 10), cy = rng.uniform(10, size - 10);
        const double th = rng.uniform(0, 3.14159), half = rng.uniform(4, 12), r = rng.uniform(3, 5);
        const std::array<double, 4> s{cx - half * std::cos(th), cy - half * std::sin(th), cx + half * std::cos(th),
                                      cy + half * std::sin(th)};
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (detail::point_segment_distance(x + 0.5, y + 0.5, s) <= r) img(x, y) = 0.8;
    }
    return img;
}

Image add_gaussian(const Image& clean, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    Image out = clean;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, sigma);
    return out;
}

Image random_image(Dims d, std::uint64_t seed) {
    Rng rng(seed);
    Image img(d.width, d.height);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    return img;
}

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(Transforms, DctIsOrthonormal) {
    for (int n : {2, 4, 8}) {
        const detail::Dct dct(n);
        Rng rng(n);
        std::vector<double> blk(n * n), orig, tmp(n * n);
        for (auto& v : blk) v = rng.uniform(-1, 1);
        orig = blk;
        double e0 = 0, e1 = 0;
        for (double v : blk) e0 += v * v;
        dct.forward(blk.data(), tmp.data());
        for (double v : blk) e1 += v * v;
        EXPECT_NEAR(e0, e1, 1e-12);
        dct.inverse(blk.data(), tmp.data());
        for (int i = 0; i < n * n; ++i) EXPECT_NEAR(blk[i], orig[i], 1e-12);
    }
}

TEST(Transforms, HaarIsOrthonormal) {
    for (std::size_t n : {1u, 2u, 4u, 16u}) {
        Rng rng(n);
        std::vector<double> v(n), orig, tmp(n);
        for (auto& x : v) x = rng.uniform(-1, 1);
        orig = v;
        double e0 = 0, e1 = 0;
        for (double x : v) e0 += x * x;
        detail::haar_forward(v.data(), n, tmp.data());
        for (double x : v) e1 += x * x;
        EXPECT_NEAR(e0, e1, 1e-12);
        detail::haar_inverse(v.data(), n, tmp.data());
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(v[i], orig[i], 1e-12);
    }
}

TEST(Bm3d, ConstantImageIsFixedPoint) {
    for (double c : {0.0, 0.25, 0.5, 1.0}) {
        const Image img(40, 33, c);
        EXPECT_EQ(bm3d_stage1(img, {}), img);
        const Image out = bm3d(img);
        EXPECT_LE(max_abs_diff(out, img), 1e-9);
    }
}

TEST(Bm3d, LargeSigmaStage1AveragesBlockMeans) {
    // With every AC coefficient below threshold, each block collapses to its
    // own mean and every group weighs 1/(1+m).
    Bm3dParams p;
    p.sigma = 10.0;
    p.search_window = 6;
    p.match_step = 3;
    p.match_thresh_stage1 = 0.05;
    const Image img = random_image({30, 26}, 7);
    const Image out = bm3d_stage1(img, p);

    const Dims d = img.dims();
    std::vector<double> num(d.size(), 0.0), den(d.size(), 0.0);
    for (int ry : detail::reference_grid(d.height, p.block, p.match_step))
        for (int rx : detail::reference_grid(d.width, p.block, p.match_step)) {
            auto group = oracle::block_match(img, {rx, ry}, p, p.match_thresh_stage1);
            std::size_t m = 1;
            while (m * 2 <= group.size()) m *= 2;
            group.resize(m);
            const double w = 1.0 / (1.0 + static_cast<double>(m));
            for (const auto& b : group) {
                double mean = 0.0;
                for (int dy = 0; dy < p.block; ++dy)
                    for (int dx = 0; dx < p.block; ++dx) mean += img(b.x + dx, b.y + dy);
                mean /= p.block * p.block;
                for (int dy = 0; dy < p.block; ++dy)
                    for (int dx = 0; dx < p.block; ++dx) {
                        const std::size_t i = static_cast<std::size_t>(b.y + dy) * d.width + b.x + dx;
                        num[i] += w * mean;
                        den[i] += w;
                    }
            }
        }
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(out[i], num[i] / den[i], 1e-12) << i;
}

TEST(BlockMatch, ConstantImageFillsGroupInRowMajorOrder) {
    Bm3dParams p;
    const Image img(64, 64, 0.5);
    const auto g = block_match(img, {20, 20}, p);
    ASSERT_EQ(g.size(), static_cast<std::size_t>(p.max_group));
    EXPECT_EQ(g[0], (BlockPos{20, 20}));
    EXPECT_EQ(g[1], (BlockPos{1, 1}));
    EXPECT_EQ(g[2], (BlockPos{2, 1}));
}

TEST(BlockMatch, SingleIdenticalBlockRanksSecond) {
    Bm3dParams p;
    Image img = random_image({64, 64}, 9);
    for (int dy = 0; dy < p.block; ++dy)
        for (int dx = 0; dx < p.block; ++dx) img(36 + dx, 35 + dy) = img(20 + dx, 22 + dy);
    const auto g = block_match(img, {20, 22}, p, 1.0);
    ASSERT_GE(g.size(), 2u);
    EXPECT_EQ(g[0], (BlockPos{20, 22}));
    EXPECT_EQ(g[1], (BlockPos{36, 35}));
    EXPECT_EQ(detail::block_distance(img, g[0], g[1], p.block), 0.0);
}

TEST(BlockMatch, MatchesExhaustiveOracle) {
    Rng rng(10);
    for (int t = 0; t < 30; ++t) {
        const Image img = random_image({64, 64}, 100 + t);
        Bm3dParams p;
        p.search_window = 3 + static_cast<int>(rng.next() % 20);
        p.max_group = 1 << (rng.next() % 6);
        const BlockPos ref{static_cast<int>(rng.next() % 57), static_cast<int>(rng.next() % 57)};
        const double thr = rng.uniform(0.1, 0.2);
        EXPECT_EQ(block_match(img, ref, p, thr), oracle::block_match(img, ref, p, thr));
    }
}

TEST(BlockMatch, DistanceMatchesOracle) {
    const Image img = random_image({32, 32}, 3);
    EXPECT_NEAR(detail::block_distance(img, {1, 2}, {10, 11}, 8), oracle::block_distance(img, 1, 2, 10, 11, 8), 1e-15);
}

TEST(Bm3d, Stage1ImprovesNoisyRods) {
    const Image clean = rod_scene(128, 12, 1);
    const Image noisy = add_gaussian(clean, 0.2, 2);
    const Image basic = bm3d_stage1(noisy, {});
    EXPECT_GT(psnr(basic, clean), psnr(noisy, clean) + 3.0);
}

TEST(Bm3d, SecondStageNotWorseThanFirst) {
    const Image clean = rod_scene(128, 12, 3);
    const Image noisy = add_gaussian(clean, 0.2, 4);
    const Image basic = bm3d_stage1(noisy, {});
    const Image full = bm3d_stage2(noisy, basic, {});
    EXPECT_GE(psnr(full, clean), psnr(basic, clean));
}

TEST(Bm3d, NoiselessStepEdgePreserved) {
    for (int edge : {17, 32, 45}) {
        Image img(64, 64, 0.1);
        for (int y = 0; y < 64; ++y)
            for (int x = edge; x < 64; ++x) img(x, y) = 0.9;
        EXPECT_LE(max_abs_diff(bm3d(img), img), 0.02) << "edge at " << edge;
        Image vert(64, 64, 0.9);
        for (int y = edge; y < 64; ++y)
            for (int x = 0; x < 64; ++x) vert(x, y) = 0.1;
        EXPECT_LE(max_abs_diff(bm3d(vert), vert), 0.02) << "edge at " << edge;
    }
}

TEST(Bm3d, ThreadCountDoesNotChangeOutput) {
    const Image noisy = add_gaussian(rod_scene(64, 4, 5), 0.2, 6);
    Bm3dParams one, four;
    one.threads = 1;
    four.threads = 4;
    EXPECT_EQ(bm3d(noisy, one), bm3d(noisy, four));
}

TEST(Bm3d, OutputInUnitRange) {
    const Image noisy = add_gaussian(rod_scene(64, 4, 7), 0.4, 8);
    const Image out = bm3d(noisy);
    for (double v : out.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Bm3d, SmallerThanBlockRejected) {
    EXPECT_THROW(bm3d(Image(7, 20, 0.5)), ProcessingError);
    EXPECT_THROW(bm3d(Image(20, 7, 0.5)), ProcessingError);
}

TEST(Bm3d, InvalidParamsRejected) {
    Bm3dParams p;
    p.sigma = 0;
    EXPECT_THROW(bm3d(Image(16, 16), p), ProcessingError);
    p = {};
    p.max_group = 12;
    EXPECT_THROW(bm3d(Image(16, 16), p), ProcessingError);
    p = {};
    p.match_step = 9;
    EXPECT_THROW(bm3d(Image(16, 16), p), ProcessingError);
}

TEST(Bm3d, ExactlyBlockSizedImage) {
    const Image img = random_image({8, 8}, 11);
    const Image out = bm3d(img);
    EXPECT_EQ(out.dims(), img.dims());
}

TEST(Psnr, KnownValues) {
    EXPECT_TRUE(std::isinf(psnr(Image(4, 4, 0.3), Image(4, 4, 0.3))));
    EXPECT_NEAR(psnr(Image(4, 4, 0.0), Image(4, 4, 0.1)), 20.0, 1e-9);
}

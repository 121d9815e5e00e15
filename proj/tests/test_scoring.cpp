#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cowal/scoring.hpp"
#include "support.hpp"

using namespace cowal;

namespace {

// Straight per-pixel loop with the 0 ln 0 = 0 convention.
double entropy_oracle(const ProbabilityMap& m) {
    double total = 0.0;
    for (std::size_t px = 0; px < m.height * m.width; ++px)
        for (std::size_t c = 0; c < m.classes; ++c) {
            const double p = m.data[px * m.classes + c];
            if (p > 0) total -= p * std::log(p);
        }
    return total;
}

ProbabilityMap random_map(std::size_t h, std::size_t w, std::size_t C, Rng& rng) {
    ProbabilityMap m{h, w, C, {}};
    for (std::size_t px = 0; px < h * w; ++px) {
        std::vector<double> v(C);
        for (auto& x : v) x = rng.uniform(0.01, 1.0);
        const double s = std::accumulate(v.begin(), v.end(), 0.0);
        for (double x : v) m.data.push_back(static_cast<float>(x / s));
    }
    normalize_distributions(m);
    return m;
}

} // namespace

TEST(PixelEntropy, Examples) {
    EXPECT_NEAR(pixel_entropy({0.5, 0.5}), 0.693147, 1e-6);
    EXPECT_EQ(pixel_entropy({1.0, 0.0}), 0.0);
    EXPECT_NEAR(pixel_entropy({0.2, 0.3, 0.5}), 1.029653, 1e-6);
    const double direct = -(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5));
    EXPECT_NEAR(pixel_entropy({0.2, 0.3, 0.5}), direct, 1e-12);
}

TEST(PixelEntropy, RejectsNonDistributions) {
    EXPECT_COWAL_ERROR(pixel_entropy({0.5, 0.4}), Errc::NotADistribution);
    EXPECT_COWAL_ERROR(pixel_entropy({1.2, -0.2}), Errc::NotADistribution);
    EXPECT_COWAL_ERROR(pixel_entropy({std::nan(""), 1.0}), Errc::NotADistribution);
}

TEST(PixelEntropy, BoundsAndClassPermutation) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const std::size_t C = 2 + rng.index(6);
        std::vector<double> p(C);
        for (auto& x : p) x = rng.uniform();
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& x : p) x /= s;
        const double h = pixel_entropy(p);
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, std::log(static_cast<double>(C)) + 1e-12);
        std::vector<double> q(p.rbegin(), p.rend());
        std::rotate(q.begin(), q.begin() + 1, q.end());
        EXPECT_NEAR(pixel_entropy(q), h, 1e-12);
    }
    EXPECT_NEAR(pixel_entropy(std::vector<double>(5, 0.2)), std::log(5.0), 1e-12);
}

TEST(FrameEntropy, Examples) {
    ProbabilityMap half_and_sure{2, 1, 2, {0.5f, 0.5f, 0.0f, 1.0f}};
    EXPECT_NEAR(frame_entropy(half_and_sure), 0.693147, 1e-6);
    ProbabilityMap uniform{2, 2, 2, std::vector<float>(8, 0.5f)};
    EXPECT_NEAR(frame_entropy(uniform), 2.772589, 1e-6);
    EXPECT_NEAR(frame_entropy(uniform), 4 * std::log(2.0), 1e-12);
}

TEST(FrameEntropy, MatchesLoopOracle) {
    Rng rng(17);
    for (int t = 0; t < 50; ++t) {
        const auto m = random_map(3, 3, 2 + rng.index(3), rng);
        EXPECT_NEAR(frame_entropy(m), entropy_oracle(m), 1e-9);
        EXPECT_LE(frame_entropy(m), 9 * std::log(static_cast<double>(m.classes)) + 1e-9);
    }
}

TEST(FrameEntropy, ErrorNamesThePixel) {
    ProbabilityMap bad{2, 2, 2, {0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.1f, 0.1f}};
    try {
        frame_entropy(bad);
        FAIL() << "expected NotADistribution";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NotADistribution);
        EXPECT_NE(std::string(e.what()).find("pixel (1,1)"), std::string::npos) << e.what();
    }
}

TEST(CosineSim, Examples) {
    EXPECT_EQ(cosine_sim({1, 0}, {0, 1}), 0.0);
    EXPECT_NEAR(cosine_sim({2, 2}, {1, 1}), 1.0, 1e-12);
    EXPECT_NEAR(cosine_sim({1, 0}, {1, 1}), 0.707107, 1e-6);
    EXPECT_COWAL_ERROR(cosine_sim({0, 0}, {1, 1}), Errc::ZeroVector);
    EXPECT_COWAL_ERROR(cosine_sim({1, 0}, {1, 1, 1}), Errc::ShapeMismatch);
}

TEST(CosineSim, ScaleInvariantAndBounded) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> u(8), v(8);
        for (auto& x : u) x = rng.normal();
        for (auto& x : v) x = rng.normal();
        const double a = rng.uniform(0.01, 100), b = rng.uniform(0.01, 100);
        std::vector<double> su(u), sv(v);
        for (auto& x : su) x *= a;
        for (auto& x : sv) x *= b;
        const double c = cosine_sim(u, v);
        EXPECT_NEAR(cosine_sim(su, sv), c, 1e-9);
        EXPECT_LE(std::abs(c), 1.0);
    }
}

TEST(MinDistToSet, Examples) {
    Matrix<double> s(2, 1, std::vector<double>{3.0, -1.0});
    EXPECT_EQ(min_dist_to_set(std::vector<double>{0.0}, s), 1.0);
    EXPECT_EQ(min_dist_to_set(std::vector<double>{3.0}, s), 0.0);
    EXPECT_COWAL_ERROR(min_dist_to_set(std::vector<double>{0.0}, Matrix<double>(0, 1)), Errc::EmptySet);
}

TEST(MinDistToSet, HighDimensionalOracleAndMonotoneGrowth) {
    Rng rng(64);
    const auto set = testing_support::gaussian(40, 64, rng);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> x(64);
        for (auto& v : x) v = rng.normal();
        double best = INFINITY;
        for (std::size_t i = 0; i < set.rows(); ++i) {
            double s = 0;
            for (std::size_t k = 0; k < 64; ++k) s += (set(i, k) - x[k]) * (set(i, k) - x[k]);
            best = std::min(best, std::sqrt(s));
        }
        EXPECT_NEAR(min_dist_to_set(x, set), best, 1e-12);
        double prev = INFINITY;
        for (std::size_t n = 1; n <= set.rows(); ++n) {
            std::vector<std::size_t> rows(n);
            std::iota(rows.begin(), rows.end(), 0);
            const double v = min_dist_to_set(x, set.gather(rows));
            EXPECT_LE(v, prev);
            prev = v;
        }
    }
}

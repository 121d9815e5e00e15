#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "cowal/datamodel.hpp"
#include "cowal/error.hpp"
#include "cowal/matrix.hpp"

namespace cowal {

struct FrameScore {
    FrameRef frame;
    double value = 0.0;  // nats
};

inline constexpr double kLogFloor = 1e-12;

/// Shannon entropy in nats, 0 ln 0 = 0. Probabilities are floored at 1e-12
/// inside the logarithm.
template <typename Range>
double pixel_entropy(const Range& p) {
    double sum = 0.0;
    double h = 0.0;
    for (auto raw : p) {
        const double v = static_cast<double>(raw);
        if (!std::isfinite(v) || v < 0.0) fail(Errc::NotADistribution, "negative or non-finite probability");
        sum += v;
        if (v > 0.0) h -= v * std::log(std::clamp(v, kLogFloor, 1.0));
    }
    if (std::abs(sum - 1.0) > kDistributionTolerance)
        fail(Errc::NotADistribution, "probabilities sum to " + std::to_string(sum));
    return std::max(h, 0.0);
}

inline double pixel_entropy(std::initializer_list<double> p) { return pixel_entropy<std::initializer_list<double>>(p); }

/// Sum of pixel entropies over the map.
inline double frame_entropy(const ProbabilityMap& m) {
    double total = 0.0;
    for (std::size_t p = 0; p < m.pixels(); ++p) {
        try {
            total += pixel_entropy(m.pixel(p));
        } catch (const Error& e) {
            fail(e.code(), "pixel (" + std::to_string(p / std::max<std::size_t>(m.width, 1)) + "," +
                               std::to_string(p % std::max<std::size_t>(m.width, 1)) + "): " + e.what());
        }
    }
    return total;
}

template <typename RangeA, typename RangeB>
double cosine_sim(const RangeA& u, const RangeB& v) {
    if (std::size(u) != std::size(v)) fail(Errc::ShapeMismatch, "cosine of vectors with different lengths");
    double dot = 0.0;
    auto vi = std::begin(v);
    for (auto a : u) dot += static_cast<double>(a) * static_cast<double>(*vi++);
    const double nu = std::sqrt(squared_norm(u));
    const double nv = std::sqrt(squared_norm(v));
    if (!(nu > 0.0) || !(nv > 0.0)) fail(Errc::ZeroVector, "cosine similarity with a zero vector");
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

inline double cosine_sim(std::initializer_list<double> u, std::initializer_list<double> v) {
    return cosine_sim<std::initializer_list<double>, std::initializer_list<double>>(u, v);
}

/// Euclidean distance from `x` to the nearest row of `set`.
template <typename Range, typename T>
double min_dist_to_set(const Range& x, const Matrix<T>& set) {
    if (set.rows() == 0) fail(Errc::EmptySet, "distance to an empty set");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set.rows(); ++i) best = std::min(best, squared_distance(x, set.row(i)));
    return std::sqrt(best);
}

} // namespace cowal

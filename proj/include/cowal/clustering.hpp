#pragma once

// k-means++ seeding, Lloyd iterations with an optional block of fixed
// centroids, and the greedy labeled-frame/centroid matching used to pin
// clusters around already-annotated frames.
//
// Ties in nearest-centroid assignment and in every sort order break toward
// the lowest index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "cowal/error.hpp"
#include "cowal/matrix.hpp"
#include "cowal/rng.hpp"

namespace cowal {

struct ClusterOptions {
    int max_iter = 100;
    double tol = 1e-6;
    int restarts = 2;  // seeded starts per k-means round; best inertia kept
};

struct ClusterResult {
    Matrix<double> centroids;             // K x dims; rows [0, fixed_count) never move
    std::vector<std::size_t> assignment;  // per point
    double inertia = 0.0;
    int iterations = 0;
    std::size_t fixed_count = 0;
    std::vector<double> inertia_trace;    // after the initial assignment and each accepted iteration

    std::size_t k() const noexcept { return centroids.rows(); }
    bool operator==(const ClusterResult&) const = default;
};

struct Matching {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (labeled index, centroid index)
    std::vector<std::size_t> unmatched;                      // ascending centroid indices
};

namespace detail {

/// Nearest centroid per point (lowest index on ties). Returns the inertia.
template <typename T>
double assign_points(const Matrix<T>& points, const Matrix<double>& centroids,
                     std::vector<std::size_t>& assignment, std::vector<double>& dist2) {
    const std::size_t n = points.rows();
    assignment.assign(n, 0);
    dist2.assign(n, 0.0);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = points.row(i);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < centroids.rows(); ++j) {
            const double d = squared_distance(p, centroids.row(j));
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        assignment[i] = arg;
        dist2[i] = best;
        inertia += best;
    }
    return inertia;
}

/// Reseeds every empty movable cluster onto the point farthest from its
/// assigned centroid. Returns true if anything changed.
template <typename T>
bool repair_empty_clusters(const Matrix<T>& points, Matrix<double>& centroids, std::size_t fixed_count,
                           std::vector<std::size_t>& assignment, std::vector<double>& dist2) {
    const std::size_t K = centroids.rows();
    std::vector<std::size_t> sizes(K, 0);
    for (std::size_t a : assignment) ++sizes[a];
    std::vector<bool> used(points.rows(), false);
    bool changed = false;
    for (std::size_t j = fixed_count; j < K; ++j) {
        if (sizes[j] != 0) continue;
        std::size_t far = points.rows();
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (!used[i] && dist2[i] > far_d) {
                far_d = dist2[i];
                far = i;
            }
        }
        if (far == points.rows()) break;
        used[far] = true;
        --sizes[assignment[far]];
        ++sizes[j];
        assignment[far] = j;
        dist2[far] = 0.0;
        const auto src = points.row(far);
        auto dst = centroids.row(j);
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<double>(src[k]);
        changed = true;
    }
    return changed;
}

template <typename T>
void update_means(const Matrix<T>& points, Matrix<double>& centroids, std::size_t fixed_count,
                  const std::vector<std::size_t>& assignment) {
    const std::size_t K = centroids.rows();
    const std::size_t d = centroids.cols();
    Matrix<double> sums(K, d, 0.0);
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const std::size_t a = assignment[i];
        if (a < fixed_count) continue;
        ++counts[a];
        auto s = sums.row(a);
        const auto p = points.row(i);
        for (std::size_t k = 0; k < d; ++k) s[k] += static_cast<double>(p[k]);
    }
    for (std::size_t j = fixed_count; j < K; ++j) {
        if (counts[j] == 0) continue;
        auto c = centroids.row(j);
        const auto s = sums.row(j);
        for (std::size_t k = 0; k < d; ++k) c[k] = s[k] / static_cast<double>(counts[j]);
    }
}

/// One sweep of single-point transfers (Hartigan). A point moves when the exact
/// objective change, including the mean shift of movable clusters, is negative.
/// Movable clusters are never emptied. Returns true if any point moved.
template <typename T>
bool transfer_pass(const Matrix<T>& points, Matrix<double> centroids, std::size_t fixed_count,
                   std::vector<std::size_t>& assignment) {
    const std::size_t K = centroids.rows(), d = centroids.cols();
    std::vector<double> count(K, 0.0);
    for (std::size_t a : assignment) count[a] += 1.0;
    bool moved = false;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto p = points.row(i);
        const std::size_t from = assignment[i];
        if (from >= fixed_count && count[from] <= 1.0) continue;
        const double dfrom = squared_distance(p, centroids.row(from));
        const double gain = from < fixed_count ? dfrom : dfrom * count[from] / (count[from] - 1.0);
        std::size_t to = from;
        double best = -1e-12 * std::max(1.0, gain);
        for (std::size_t j = 0; j < K; ++j) {
            if (j == from) continue;
            const double dj = squared_distance(p, centroids.row(j));
            const double cost = j < fixed_count ? dj : dj * count[j] / (count[j] + 1.0);
            if (cost - gain < best) {
                best = cost - gain;
                to = j;
            }
        }
        if (to == from) continue;
        if (from >= fixed_count) {
            auto c = centroids.row(from);
            for (std::size_t k = 0; k < d; ++k) c[k] = (c[k] * count[from] - static_cast<double>(p[k])) / (count[from] - 1.0);
        }
        if (to >= fixed_count) {
            auto c = centroids.row(to);
            for (std::size_t k = 0; k < d; ++k) c[k] = (c[k] * count[to] + static_cast<double>(p[k])) / (count[to] + 1.0);
        }
        count[from] -= 1.0;
        count[to] += 1.0;
        assignment[i] = to;
        moved = true;
    }
    return moved;
}

/// Lloyd iterations with centroids [0, fixed_count) held constant. Once Lloyd
/// stalls, a transfer sweep tries to escape the local optimum; its result is
/// re-centred and reassigned to nearest centroids and kept only if the inertia
/// drops. Any step that would raise the inertia is rejected, so the trace is
/// non-increasing. `iterations` counts accepted steps of either kind.
template <typename T>
ClusterResult lloyd(const Matrix<T>& points, Matrix<double> centroids, std::size_t fixed_count,
                    int max_iter, double tol) {
    ClusterResult r;
    r.fixed_count = fixed_count;
    std::vector<double> dist2;
    r.inertia = assign_points(points, centroids, r.assignment, dist2);
    r.inertia_trace.push_back(r.inertia);

    std::vector<std::size_t> next_assignment;
    std::vector<double> next_dist2;
    auto accept = [&](Matrix<double>& candidate, double next) {
        centroids = std::move(candidate);
        r.assignment = next_assignment;
        dist2 = next_dist2;
        r.inertia = next;
        r.inertia_trace.push_back(next);
        ++r.iterations;
    };

    while (r.iterations < max_iter) {
        while (r.iterations < max_iter) {
            Matrix<double> candidate = centroids;
            std::vector<std::size_t> work_assignment = r.assignment;
            std::vector<double> work_dist2 = dist2;
            repair_empty_clusters(points, candidate, fixed_count, work_assignment, work_dist2);
            update_means(points, candidate, fixed_count, work_assignment);
            if (candidate == centroids) break;
            const double next = assign_points(points, candidate, next_assignment, next_dist2);
            if (next > r.inertia) break;
            const double prev = r.inertia;
            accept(candidate, next);
            if (prev - next <= tol * prev) break;
        }
        if (r.iterations >= max_iter) break;

        std::vector<std::size_t> moved = r.assignment;
        if (!transfer_pass(points, centroids, fixed_count, moved)) break;
        Matrix<double> candidate = centroids;
        update_means(points, candidate, fixed_count, moved);
        const double next = assign_points(points, candidate, next_assignment, next_dist2);
        if (!(next < r.inertia)) break;
        accept(candidate, next);
    }
    r.centroids = std::move(centroids);
    return r;
}

} // namespace detail

/// D^2 seeding of `count` new centroids given centroids already in place.
/// With no existing centroids the first pick is uniform. Picks are distinct
/// point indices; when every remaining point has zero distance the lowest
/// unchosen index is taken.
template <typename T>
Matrix<double> kmeanspp_extend(const Matrix<T>& points, const Matrix<double>& existing, std::size_t count,
                               std::uint64_t seed) {
    const std::size_t n = points.rows();
    if (n == 0) fail(Errc::EmptyInput, "k-means++ on an empty point set");
    if (count > n) fail(Errc::KTooLarge, "cannot seed " + std::to_string(count) + " centroids from " +
                                             std::to_string(n) + " points");
    Rng rng(seed);
    Matrix<double> out(count, points.cols());
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    auto absorb = [&](std::span<const double> c) {
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), c));
    };
    for (std::size_t j = 0; j < existing.rows(); ++j) absorb(existing.row(j));

    for (std::size_t c = 0; c < count; ++c) {
        std::size_t pick = n;
        if (c == 0 && existing.rows() == 0) {
            pick = static_cast<std::size_t>(rng.index(n));
        } else {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) total += d2[i];
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (chosen[i] || d2[i] <= 0.0) continue;
                    acc += d2[i];
                    pick = i;
                    if (acc > target) break;
                }
            } else {
                for (std::size_t i = 0; i < n && pick == n; ++i)
                    if (!chosen[i]) pick = i;
            }
        }
        chosen[pick] = true;
        const auto p = points.row(pick);
        auto dst = out.row(c);
        for (std::size_t k = 0; k < p.size(); ++k) dst[k] = static_cast<double>(p[k]);
        d2[pick] = 0.0;
        absorb(out.row(c));
    }
    return out;
}

template <typename T>
Matrix<double> kmeanspp_init(const Matrix<T>& points, std::size_t K, std::uint64_t seed) {
    if (points.rows() == 0) fail(Errc::EmptyInput, "k-means++ on an empty point set");
    if (K == 0) fail(Errc::KTooLarge, "K must be at least 1");
    return kmeanspp_extend(points, Matrix<double>(0, points.cols()), K, seed);
}

template <typename T>
ClusterResult lloyd_kmeans(const Matrix<T>& points, const Matrix<double>& init_centroids, int max_iter = 100,
                           double tol = 1e-6) {
    if (points.rows() == 0 || init_centroids.rows() == 0) fail(Errc::EmptyInput, "k-means needs points and centroids");
    if (init_centroids.rows() > points.rows()) fail(Errc::KTooLarge, "more centroids than points");
    if (init_centroids.cols() != points.cols()) fail(Errc::ShapeMismatch, "centroid dimension differs from points");
    return detail::lloyd(points, init_centroids, 0, max_iter, tol);
}

/// k-means over `points` with the rows of `fixed` held in place. Output
/// centroids are `fixed` followed by the updated free centroids.
template <typename T>
ClusterResult constrained_kmeans(const Matrix<T>& points, const Matrix<double>& fixed, const Matrix<double>& free_init,
                                 int max_iter = 100, double tol = 1e-6) {
    if (points.rows() == 0) fail(Errc::EmptyInput, "constrained k-means on an empty point set");
    const std::size_t K = fixed.rows() + free_init.rows();
    if (K == 0) fail(Errc::EmptyInput, "no centroids");
    if (points.rows() < K) fail(Errc::TooFewPoints, std::to_string(points.rows()) + " points for K=" + std::to_string(K));
    if ((fixed.rows() && fixed.cols() != points.cols()) || (free_init.rows() && free_init.cols() != points.cols()))
        fail(Errc::ShapeMismatch, "centroid dimension differs from points");
    Matrix<double> all(K, points.cols());
    std::copy(fixed.data().begin(), fixed.data().end(), all.data().begin());
    std::copy(free_init.data().begin(), free_init.data().end(),
              all.data().begin() + static_cast<std::ptrdiff_t>(fixed.data().size()));
    for (double v : all.data())
        if (!std::isfinite(v)) fail(Errc::NonFinite, "non-finite centroid");
    return detail::lloyd(points, std::move(all), fixed.rows(), max_iter, tol);
}

/// Greedy matching of labeled embeddings to distinct centroids. Labeled rows
/// are visited by ascending distance to their closest centroid; each takes
/// its nearest centroid not yet taken.
template <typename T>
Matching match_centroids(const Matrix<T>& labeled, const Matrix<double>& centroids) {
    const std::size_t A = labeled.rows();
    const std::size_t K = centroids.rows();
    if (K < A) fail(Errc::TooFewCentroids, std::to_string(K) + " centroids for " + std::to_string(A) + " labeled frames");

    Matrix<double> d(A, K);
    std::vector<double> closest(A, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < A; ++i)
        for (std::size_t j = 0; j < K; ++j) {
            d(i, j) = std::sqrt(squared_distance(labeled.row(i), centroids.row(j)));
            closest[i] = std::min(closest[i], d(i, j));
        }

    std::vector<std::size_t> visit(A);
    std::iota(visit.begin(), visit.end(), 0);
    std::stable_sort(visit.begin(), visit.end(), [&](std::size_t a, std::size_t b) { return closest[a] < closest[b]; });

    Matching m;
    std::vector<bool> assigned(K, false);
    std::vector<std::size_t> order(K);
    for (std::size_t i : visit) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d(i, a) < d(i, b); });
        for (std::size_t j : order) {
            if (!assigned[j]) {
                assigned[j] = true;
                m.pairs.emplace_back(i, j);
                break;
            }
        }
    }
    for (std::size_t j = 0; j < K; ++j)
        if (!assigned[j]) m.unmatched.push_back(j);
    return m;
}

struct CowalClustering {
    ClusterResult first_round;  // plain k-means with K = |A| + Q
    Matching matching;          // against first_round centroids
    ClusterResult clusters;     // fixed labeled centroids (labeled order) then Q free centroids
};

/// Best-of-`restarts` k-means++ / Lloyd run.
template <typename T>
ClusterResult kmeans_restarts(const Matrix<T>& points, std::size_t K, std::uint64_t seed, const ClusterOptions& opt) {
    ClusterResult best;
    bool have = false;
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        auto init = kmeanspp_init(points, K, derive_seed(seed, static_cast<std::uint64_t>(r)));
        auto res = lloyd_kmeans(points, init, opt.max_iter, opt.tol);
        if (!have || res.inertia < best.inertia) {
            best = std::move(res);
            have = true;
        }
    }
    return best;
}

/// Cluster all frames with K = |A| + Q, match labeled frames to centroids,
/// substitute the matched centroids with the labeled embeddings and re-run
/// k-means with those held fixed. `labeled_rows` index into `points`.
template <typename T>
CowalClustering full_cowal_clustering(const Matrix<T>& points, std::span<const std::size_t> labeled_rows, std::size_t Q,
                                      std::uint64_t seed, const ClusterOptions& opt = {}) {
    if (Q == 0) fail(Errc::BadParams, "budget Q must be at least 1");
    if (points.rows() == 0) fail(Errc::EmptyInput, "no frames to cluster");
    for (std::size_t r : labeled_rows)
        if (r >= points.rows()) fail(Errc::SchemaViolation, "labeled row out of range");
    const std::size_t A = labeled_rows.size();
    if (points.rows() < A + Q)
        fail(Errc::BudgetExceedsPool, "budget " + std::to_string(Q) + " exceeds unlabeled pool of " +
                                          std::to_string(points.rows() - A));

    CowalClustering out;
    out.first_round = kmeans_restarts(points, A + Q, seed, opt);
    if (A == 0) {
        for (std::size_t j = 0; j < Q; ++j) out.matching.unmatched.push_back(j);
        out.clusters = out.first_round;
        return out;
    }

    const Matrix<T> labeled = points.gather(labeled_rows);
    out.matching = match_centroids(labeled, out.first_round.centroids);

    Matrix<double> fixed = labeled.template cast<double>();
    Matrix<double> free_init(Q, points.cols());
    for (std::size_t q = 0; q < Q; ++q) {
        const auto src = out.first_round.centroids.row(out.matching.unmatched[q]);
        std::copy(src.begin(), src.end(), free_init.row(q).begin());
    }
    out.clusters = constrained_kmeans(points, fixed, free_init, opt.max_iter, opt.tol);
    // extra restarts seed the free centroids by D^2 around the fixed ones;
    // the unmatched-centroid start wins ties
    for (int r = 1; r < opt.restarts; ++r) {
        auto alt = constrained_kmeans(points, fixed, kmeanspp_extend(points, fixed, Q, derive_seed(seed, 0x2000u + r)),
                                      opt.max_iter, opt.tol);
        if (alt.inertia < out.clusters.inertia) out.clusters = std::move(alt);
    }
    return out;
}

} // namespace cowal

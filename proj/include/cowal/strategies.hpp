#pragma once

// Batch selection strategies. Every strategy maps (unlabeled pool, labeled
// set) to exactly Q distinct unlabeled frames. Frames are addressed by their
// global row in the embedding matrix; ties always break toward the lower
// global index.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cowal/clustering.hpp"
#include "cowal/datamodel.hpp"
#include "cowal/error.hpp"
#include "cowal/rng.hpp"
#include "cowal/scoring.hpp"

namespace cowal {

enum class Strategy { Random, Temporal, Entropy, CoreSet, CoreSetXEntropy, Suggestive, CowalCenter, Cowal };

inline constexpr std::array<Strategy, 8> kAllStrategies = {
    Strategy::Random,          Strategy::Temporal,   Strategy::Entropy,     Strategy::CoreSet,
    Strategy::CoreSetXEntropy, Strategy::Suggestive, Strategy::CowalCenter, Strategy::Cowal};

inline std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Random: return "random";
        case Strategy::Temporal: return "temporal";
        case Strategy::Entropy: return "entropy";
        case Strategy::CoreSet: return "coreset";
        case Strategy::CoreSetXEntropy: return "coreset-x-entropy";
        case Strategy::Suggestive: return "suggestive";
        case Strategy::CowalCenter: return "cowal-center";
        case Strategy::Cowal: return "cowal";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view name) {
    for (Strategy s : kAllStrategies)
        if (strategy_name(s) == name) return s;
    fail(Errc::UnknownStrategy, std::string(name));
}

inline bool needs_entropy(Strategy s) {
    return s == Strategy::Entropy || s == Strategy::CoreSetXEntropy || s == Strategy::Suggestive ||
           s == Strategy::Cowal;
}

struct StrategyInput {
    FrameLayout layout;
    const EmbeddingMatrix& embeddings;   // one row per global frame
    std::vector<double> entropies;       // per global frame; empty when unavailable
    ALState state;
    std::size_t budget = 10;
    std::uint64_t seed = 0;
    ClusterOptions clustering{};
};

struct Selection {
    std::vector<FrameRef> frames;
    std::vector<std::string> reasons;        // one per frame
    std::optional<CowalClustering> clusters;  // COWAL variants only
    std::vector<std::size_t> pool_rows;       // COWAL: global index of each clustered point
};

namespace detail {

inline std::string fmt6(const char* key, double v) { return std::string(key) + "=" + format_fixed6(v); }

struct Pool {
    std::vector<std::size_t> unlabeled;  // ascending global indices
    std::vector<std::size_t> labeled;
};

inline Pool validate(const StrategyInput& in, bool want_entropy) {
    if (in.budget == 0) fail(Errc::BadParams, "budget must be at least 1");
    if (in.embeddings.rows() != in.layout.total())
        fail(Errc::ShapeMismatch, "embedding rows " + std::to_string(in.embeddings.rows()) + " != frames " +
                                      std::to_string(in.layout.total()));
    Pool p;
    for (const auto& f : in.state.unlabeled) p.unlabeled.push_back(in.layout.global(f));
    for (const auto& f : in.state.labeled) p.labeled.push_back(in.layout.global(f));
    std::sort(p.unlabeled.begin(), p.unlabeled.end());
    std::sort(p.labeled.begin(), p.labeled.end());
    if (in.budget > p.unlabeled.size())
        fail(Errc::BudgetExceedsPool, "budget " + std::to_string(in.budget) + " > pool " +
                                          std::to_string(p.unlabeled.size()));
    if (want_entropy) {
        if (in.entropies.size() != in.layout.total()) fail(Errc::MissingScores, "no entropy score table");
        for (std::size_t g : p.unlabeled)
            if (!std::isfinite(in.entropies[g]) || in.entropies[g] < 0.0)
                fail(Errc::MissingScores, "frame " + std::to_string(g) + " lacks a valid entropy");
    }
    return p;
}

inline Selection finish(const StrategyInput& in, const std::vector<std::size_t>& picks,
                        std::vector<std::string> reasons) {
    Selection s;
    for (std::size_t g : picks) s.frames.push_back(in.layout.ref(g));
    s.reasons = std::move(reasons);
    return s;
}

inline double dist(const EmbeddingMatrix& e, std::size_t a, std::size_t b) {
    return std::sqrt(squared_distance(e.row(a), e.row(b)));
}

/// Greedy k-center over the pool; `weight(g)` scales each candidate's
/// distance to the growing reference set. With an empty reference set the
/// distance factor is treated as a constant and only the weight competes.
template <typename Weight>
Selection greedy_k_center(const StrategyInput& in, const Pool& pool, Weight weight) {
    const auto& U = pool.unlabeled;
    std::vector<double> mind(U.size(), std::numeric_limits<double>::infinity());
    for (std::size_t u = 0; u < U.size(); ++u)
        for (std::size_t a : pool.labeled) mind[u] = std::min(mind[u], dist(in.embeddings, U[u], a));
    bool have_reference = !pool.labeled.empty();
    std::vector<bool> taken(U.size(), false);
    std::vector<std::size_t> picks;
    std::vector<std::string> reasons;
    for (std::size_t q = 0; q < in.budget; ++q) {
        std::size_t best = U.size();
        double best_score = -1.0;
        for (std::size_t u = 0; u < U.size(); ++u) {
            if (taken[u]) continue;
            const double score = have_reference ? mind[u] * weight(U[u]) : weight(U[u]);
            if (best == U.size() || score > best_score) {
                best = u;
                best_score = score;
            }
        }
        taken[best] = true;
        picks.push_back(U[best]);
        reasons.push_back(have_reference ? fmt6("mindist", mind[best]) + ";" + fmt6("score", best_score)
                                         : fmt6("score", best_score));
        for (std::size_t u = 0; u < U.size(); ++u)
            mind[u] = std::min(mind[u], dist(in.embeddings, U[u], U[best]));
        have_reference = true;
    }
    return finish(in, picks, std::move(reasons));
}

/// Pool rows ordered by descending entropy, then ascending index.
inline std::vector<std::size_t> by_entropy(const std::vector<std::size_t>& rows, const std::vector<double>& h) {
    std::vector<std::size_t> order = rows;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
    return order;
}

} // namespace detail

inline Selection select_random(const StrategyInput& in) {
    const auto pool = detail::validate(in, false);
    std::vector<std::size_t> u = pool.unlabeled;
    Rng rng(in.seed);
    for (std::size_t i = 0; i < in.budget; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.index(u.size() - i));
        std::swap(u[i], u[j]);
    }
    u.resize(in.budget);
    std::sort(u.begin(), u.end());
    return detail::finish(in, u, std::vector<std::string>(u.size(), "random"));
}

/// Fills the least-annotated video first; within a video takes the frame
/// farthest in time from its labeled frames, or the middle frame if none.
inline Selection select_temporal_coverage(const StrategyInput& in) {
    const auto pool = detail::validate(in, false);
    const std::size_t V = in.layout.video_count();
    std::vector<std::vector<std::uint32_t>> labeled(V), open(V);
    for (const auto& f : in.state.labeled) labeled[f.video_id].push_back(f.frame_idx);
    for (const auto& f : in.state.unlabeled) open[f.video_id].push_back(f.frame_idx);
    for (auto& o : open) std::sort(o.begin(), o.end());

    std::vector<std::size_t> picks;
    std::vector<std::string> reasons;
    for (std::size_t q = 0; q < in.budget; ++q) {
        std::size_t video = V;
        for (std::size_t v = 0; v < V; ++v) {
            if (open[v].empty()) continue;
            if (video == V || labeled[v].size() < labeled[video].size()) video = v;
        }
        const auto middle = static_cast<std::int64_t>(in.layout.frame_count(video) / 2);
        std::size_t best = 0;
        std::int64_t best_score = std::numeric_limits<std::int64_t>::min();
        for (std::size_t k = 0; k < open[video].size(); ++k) {
            const auto f = static_cast<std::int64_t>(open[video][k]);
            std::int64_t score;
            if (labeled[video].empty()) {
                score = -std::abs(f - middle);
            } else {
                score = std::numeric_limits<std::int64_t>::max();
                for (std::uint32_t l : labeled[video]) score = std::min(score, std::abs(f - static_cast<std::int64_t>(l)));
            }
            if (score > best_score) {
                best_score = score;
                best = k;
            }
        }
        const std::uint32_t frame = open[video][best];
        open[video].erase(open[video].begin() + static_cast<std::ptrdiff_t>(best));
        reasons.push_back((labeled[video].empty() ? std::string("middle") : "gap=" + std::to_string(best_score)) +
                          ";video_labeled=" + std::to_string(labeled[video].size()));
        labeled[video].push_back(frame);
        picks.push_back(in.layout.global({static_cast<std::uint32_t>(video), frame}));
    }
    return detail::finish(in, picks, std::move(reasons));
}

inline Selection select_entropy(const StrategyInput& in) {
    const auto pool = detail::validate(in, true);
    auto order = detail::by_entropy(pool.unlabeled, in.entropies);
    order.resize(in.budget);
    std::vector<std::string> reasons;
    for (std::size_t g : order) reasons.push_back(detail::fmt6("entropy", in.entropies[g]));
    return detail::finish(in, order, std::move(reasons));
}

inline Selection select_coreset(const StrategyInput& in) {
    const auto pool = detail::validate(in, false);
    return detail::greedy_k_center(in, pool, [](std::size_t) { return 1.0; });
}

inline Selection select_coreset_x_entropy(const StrategyInput& in) {
    const auto pool = detail::validate(in, true);
    return detail::greedy_k_center(in, pool, [&](std::size_t g) { return in.entropies[g]; });
}

/// Top-2Q entropy candidates, then greedy facility-location coverage of the
/// unlabeled pool under cosine similarity.
inline Selection select_suggestive(const StrategyInput& in) {
    const auto pool = detail::validate(in, true);
    const auto& U = pool.unlabeled;
    auto candidates = detail::by_entropy(U, in.entropies);
    candidates.resize(std::min(candidates.size(), 2 * in.budget));

    // sim[c][u]: candidate c against pool member u.
    Matrix<double> sim(candidates.size(), U.size());
    for (std::size_t c = 0; c < candidates.size(); ++c)
        for (std::size_t u = 0; u < U.size(); ++u)
            sim(c, u) = cosine_sim(in.embeddings.row(candidates[c]), in.embeddings.row(U[u]));

    std::vector<double> cover(U.size(), -1.0);
    std::vector<bool> taken(candidates.size(), false);
    std::vector<std::size_t> picks;
    std::vector<std::string> reasons;
    for (std::size_t q = 0; q < in.budget; ++q) {
        std::size_t best = candidates.size();
        double best_gain = 0.0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (taken[c]) continue;
            double gain = 0.0;
            for (std::size_t u = 0; u < U.size(); ++u) gain += std::max(0.0, sim(c, u) - cover[u]);
            if (best == candidates.size() || gain > best_gain) {
                best = c;
                best_gain = gain;
            }
        }
        taken[best] = true;
        for (std::size_t u = 0; u < U.size(); ++u) cover[u] = std::max(cover[u], sim(best, u));
        picks.push_back(candidates[best]);
        reasons.push_back(detail::fmt6("gain", best_gain) + ";" + detail::fmt6("entropy", in.entropies[candidates[best]]));
    }
    return detail::finish(in, picks, std::move(reasons));
}

namespace detail {

enum class ClusterPick { MaxEntropy, NearestCentroid };

inline Selection select_cowal_impl(const StrategyInput& in, ClusterPick rule) {
    const auto pool = validate(in, rule == ClusterPick::MaxEntropy);
    const bool have_entropy = in.entropies.size() == in.layout.total();

    // Cluster labeled and unlabeled frames together; labeled rows are tracked
    // by their position in this merged list.
    std::vector<std::size_t> rows;
    std::merge(pool.labeled.begin(), pool.labeled.end(), pool.unlabeled.begin(), pool.unlabeled.end(),
               std::back_inserter(rows));
    std::vector<bool> is_labeled(rows.size(), false);
    std::vector<std::size_t> labeled_pos;
    for (std::size_t r = 0, a = 0; r < rows.size(); ++r) {
        if (a < pool.labeled.size() && rows[r] == pool.labeled[a]) {
            is_labeled[r] = true;
            labeled_pos.push_back(r);
            ++a;
        }
    }
    const EmbeddingMatrix points = in.embeddings.gather(rows);
    CowalClustering cc = full_cowal_clustering(points, labeled_pos, in.budget, in.seed, in.clustering);
    const ClusterResult& cr = cc.clusters;

    std::vector<bool> selected(rows.size(), false);
    std::vector<std::size_t> picks;
    std::vector<std::string> reasons;
    std::vector<std::size_t> empty_clusters;
    for (std::size_t j = cr.fixed_count; j < cr.k(); ++j) {
        std::size_t best = rows.size();
        double best_score = 0.0;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (is_labeled[r] || cr.assignment[r] != j) continue;
            const double score = rule == ClusterPick::MaxEntropy
                                     ? in.entropies[rows[r]]
                                     : -std::sqrt(squared_distance(points.row(r), cr.centroids.row(j)));
            if (best == rows.size() || score > best_score) {
                best = r;
                best_score = score;
            }
        }
        if (best == rows.size()) {
            empty_clusters.push_back(j);
            continue;
        }
        selected[best] = true;
        picks.push_back(rows[best]);
        reasons.push_back("cluster=" + std::to_string(j) + ";" +
                          (rule == ClusterPick::MaxEntropy ? fmt6("entropy", best_score) : fmt6("dist", -best_score)));
    }

    // A free cluster without unlabeled members is replaced by the best
    // remaining frame outside the fixed clusters, else anywhere in the pool.
    for (std::size_t j : empty_clusters) {
        std::size_t best = rows.size();
        for (int pass = 0; pass < 2 && best == rows.size(); ++pass) {
            double best_score = 0.0;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (is_labeled[r] || selected[r]) continue;
                if (pass == 0 && cr.assignment[r] < cr.fixed_count) continue;
                const double score = have_entropy ? in.entropies[rows[r]] : 0.0;
                if (best == rows.size() || score > best_score) {
                    best = r;
                    best_score = score;
                }
            }
        }
        selected[best] = true;
        picks.push_back(rows[best]);
        reasons.push_back("repair=" + std::to_string(j) +
                          (have_entropy ? ";" + fmt6("entropy", in.entropies[rows[best]]) : std::string()));
    }

    Selection s = finish(in, picks, std::move(reasons));
    s.clusters = std::move(cc);
    s.pool_rows = std::move(rows);
    return s;
}

} // namespace detail

inline Selection select_cowal_center(const StrategyInput& in) {
    return detail::select_cowal_impl(in, detail::ClusterPick::NearestCentroid);
}

inline Selection select_cowal(const StrategyInput& in) {
    return detail::select_cowal_impl(in, detail::ClusterPick::MaxEntropy);
}

inline Selection select(Strategy s, const StrategyInput& in) {
    switch (s) {
        case Strategy::Random: return select_random(in);
        case Strategy::Temporal: return select_temporal_coverage(in);
        case Strategy::Entropy: return select_entropy(in);
        case Strategy::CoreSet: return select_coreset(in);
        case Strategy::CoreSetXEntropy: return select_coreset_x_entropy(in);
        case Strategy::Suggestive: return select_suggestive(in);
        case Strategy::CowalCenter: return select_cowal_center(in);
        case Strategy::Cowal: return select_cowal(in);
    }
    fail(Errc::UnknownStrategy, "unhandled strategy");
}

} // namespace cowal

#pragma once

// Desk-scale active-learning harness.
//
// A SyntheticWorld is a set of videos whose frames follow a 2-D random walk
// in the unit box. Videos start near one of a few shared scene centers, so
// different videos revisit similar views. Each frame's ground truth is a disk centered at its walk
// position; its feature vector is a random-Fourier lift of the position plus
// Gaussian noise, so nearby positions map to nearby features. Small walk
// steps make consecutive frames nearly redundant.
//
// The proxy learner predicts the mask of the nearest labeled frame in
// embedding space with confidence decaying exponentially in that distance.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "cowal/datamodel.hpp"
#include "cowal/error.hpp"
#include "cowal/matrix.hpp"
#include "cowal/representation.hpp"
#include "cowal/rng.hpp"
#include "cowal/scoring.hpp"
#include "cowal/strategies.hpp"

namespace cowal {

struct WorldParams {
    std::size_t videos = 12;
    std::size_t frames = 40;
    double step = 0.02;          // random-walk step size per frame
    std::size_t grid = 16;       // mask side length in pixels
    double radius = 0.15;        // disk radius in unit-box coordinates
    std::size_t feature_dims = 16;
    double length_scale = 0.2;   // random Fourier feature length scale
    double feature_noise = 0.05; // per-coordinate Gaussian noise on features
    std::size_t scenes = 4;      // shared scene centers; 0 = uniform video starts
    double scene_spread = 0.1;   // stddev of a video's start around its scene center
};

struct SyntheticWorld {
    WorldParams params;
    std::uint64_t seed = 0;
    FrameLayout layout;
    Matrix<double> positions;  // total x 2
    Matrix<float> features;    // total x feature_dims
    std::vector<LabelMask> masks;
};

inline LabelMask disk_mask(double cx, double cy, double radius, std::size_t grid) {
    LabelMask m;
    m.height = m.width = grid;
    m.data.assign(grid * grid, 0);
    const double g = static_cast<double>(grid);
    for (std::size_t i = 0; i < grid; ++i)
        for (std::size_t j = 0; j < grid; ++j) {
            const double x = (static_cast<double>(j) + 0.5) / g;
            const double y = (static_cast<double>(i) + 0.5) / g;
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) m.data[i * grid + j] = 1;
        }
    return m;
}

inline double reflect_unit(double x) {
    // Fold onto [0, 1] with mirror boundaries.
    x = std::fmod(std::abs(x), 2.0);
    return x > 1.0 ? 2.0 - x : x;
}

inline SyntheticWorld generate_world(const WorldParams& p, std::uint64_t seed) {
    if (p.videos < 1 || p.frames < 1 || !(p.radius > 0.0 && p.radius < 0.5) || p.grid < 4 || p.step < 0.0 ||
        p.feature_dims < 1 || !(p.length_scale > 0.0) || p.feature_noise < 0.0 || p.scene_spread < 0.0)
        fail(Errc::BadParams, "world parameters out of range");

    SyntheticWorld w;
    w.params = p;
    w.seed = seed;
    w.layout = FrameLayout(std::vector<std::size_t>(p.videos, p.frames));
    const std::size_t n = w.layout.total();
    w.positions = Matrix<double>(n, 2);
    w.features = Matrix<float>(n, p.feature_dims);
    w.masks.reserve(n);

    Rng lift_rng(derive_seed(seed, 0xFEA7));
    std::vector<double> omega(2 * p.feature_dims), phase(p.feature_dims);
    for (double& o : omega) o = lift_rng.normal() / p.length_scale;
    for (double& b : phase) b = lift_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = std::sqrt(2.0 / static_cast<double>(p.feature_dims));

    Rng scene_rng(derive_seed(seed, 0x5CE7E));
    std::vector<std::pair<double, double>> centers(p.scenes);
    for (auto& c : centers) c = {scene_rng.uniform(), scene_rng.uniform()};

    for (std::size_t v = 0; v < p.videos; ++v) {
        Rng rng(derive_seed(seed, v + 1));
        double x, y;
        if (centers.empty()) {
            x = rng.uniform();
            y = rng.uniform();
        } else {
            const auto& c = centers[rng.index(centers.size())];
            x = reflect_unit(c.first + p.scene_spread * rng.normal());
            y = reflect_unit(c.second + p.scene_spread * rng.normal());
        }
        for (std::size_t f = 0; f < p.frames; ++f) {
            if (f > 0) {
                x = reflect_unit(x + p.step * rng.normal());
                y = reflect_unit(y + p.step * rng.normal());
            }
            const std::size_t g = w.layout.offset(v) + f;
            w.positions(g, 0) = x;
            w.positions(g, 1) = y;
            w.masks.push_back(disk_mask(x, y, p.radius, p.grid));
            for (std::size_t k = 0; k < p.feature_dims; ++k) {
                const double lift = amp * std::cos(omega[2 * k] * x + omega[2 * k + 1] * y + phase[k]);
                w.features(g, k) = static_cast<float>(lift + p.feature_noise * rng.normal());
            }
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// Proxy learner and DICE
// ---------------------------------------------------------------------------

struct ProxyLearner {
    const EmbeddingMatrix* embeddings = nullptr;
    const std::vector<LabelMask>* masks = nullptr;
    std::vector<std::size_t> labeled;  // global rows with known masks
    double bandwidth = 0.1;

    /// Nearest labeled row and its distance (lowest row on ties).
    std::pair<std::size_t, double> nearest(std::size_t row) const {
        if (labeled.empty()) fail(Errc::NoLabeledData, "proxy learner has no labeled frames");
        std::size_t best = labeled.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t l : labeled) {
            const double d = squared_distance(embeddings->row(row), embeddings->row(l));
            if (d < best_d) {
                best_d = d;
                best = l;
            }
        }
        return {best, std::sqrt(best_d)};
    }
};

inline ProxyLearner fit_proxy(const EmbeddingMatrix& embeddings, const std::vector<LabelMask>& masks,
                              std::vector<std::size_t> labeled, double bandwidth) {
    if (!(bandwidth > 0.0)) fail(Errc::BadParams, "proxy bandwidth must be positive");
    return ProxyLearner{&embeddings, &masks, std::move(labeled), bandwidth};
}

/// Two-class map (background, foreground) from the nearest labeled mask:
/// p_fg = 0.5 + (m - 0.5) * exp(-d / bandwidth).
inline ProbabilityMap proxy_predict_at_distance(const LabelMask& nearest_mask, double distance, double bandwidth) {
    ProbabilityMap pm;
    pm.height = nearest_mask.height;
    pm.width = nearest_mask.width;
    pm.classes = 2;
    pm.data.resize(pm.pixels() * 2);
    // Round the likelier class once; 1 - q is then exact in float, so each
    // pixel sums to 1 and entropy stays monotone in distance.
    const float q = static_cast<float>(0.5 + 0.5 * std::exp(-distance / bandwidth));
    for (std::size_t p = 0; p < pm.pixels(); ++p) {
        const bool fg = nearest_mask.data[p] != 0;
        pm.data[2 * p] = fg ? 1.0f - q : q;
        pm.data[2 * p + 1] = fg ? q : 1.0f - q;
    }
    return pm;
}

inline ProbabilityMap proxy_predict(const ProxyLearner& l, std::size_t row) {
    const auto [n, d] = l.nearest(row);
    return proxy_predict_at_distance((*l.masks)[n], d, l.bandwidth);
}

/// Per-pixel argmax; ties go to the lower class id.
inline LabelMask argmax_mask(const ProbabilityMap& pm) {
    LabelMask m;
    m.height = pm.height;
    m.width = pm.width;
    m.data.resize(pm.pixels());
    for (std::size_t p = 0; p < pm.pixels(); ++p) {
        const auto px = pm.pixel(p);
        m.data[p] = static_cast<std::uint8_t>(std::distance(px.begin(), std::max_element(px.begin(), px.end())));
    }
    return m;
}

/// 2|P ∩ T| / (|P| + |T|) over non-zero pixels; 1 when both are empty.
inline double dice(const LabelMask& pred, const LabelMask& truth) {
    if (pred.height != truth.height || pred.width != truth.width) fail(Errc::ShapeMismatch, "mask shapes differ");
    std::size_t inter = 0, np = 0, nt = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool a = pred.data[i] != 0, b = truth.data[i] != 0;
        np += a;
        nt += b;
        inter += a && b;
    }
    if (np + nt == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + nt);
}

// ---------------------------------------------------------------------------
// AuALC
// ---------------------------------------------------------------------------

/// Trapezoidal area under (step, dice) as a fraction of the area of a flat
/// curve at full_data_dice over the same step range. May exceed 1.
inline double aualc(const ALCurve& c) {
    if (c.points.size() < 2) fail(Errc::TooFewPoints, "AuALC needs at least two points");
    if (!(c.full_data_dice > 0.0)) fail(Errc::NonPositiveReference, "full-data DICE must be positive");
    double area = 0.0;
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        const double w = static_cast<double>(c.points[i].step - c.points[i - 1].step);
        if (!(w > 0.0)) fail(Errc::SchemaViolation, "curve steps must be strictly increasing");
        area += 0.5 * w * (c.points[i].dice + c.points[i - 1].dice);
    }
    const double span = static_cast<double>(c.points.back().step - c.points.front().step);
    return area / (c.full_data_dice * span);
}

inline double median(std::vector<double> v) {
    if (v.empty()) fail(Errc::EmptyInput, "median of nothing");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------
// AL loop
// ---------------------------------------------------------------------------

enum class EmbeddingSource { Features, Encoder };

struct SimulationConfig {
    std::size_t budget = 10;        // Q
    int steps = 6;                  // T
    std::size_t runs = 10;          // R
    std::size_t initial_videos = 10;
    WorldParams world{};
    std::uint64_t world_seed = 0;
    std::uint64_t seed = 0;
    double proxy_bandwidth = 0.1;
    ClusterOptions clustering{};
    EmbeddingSource embedding = EmbeddingSource::Features;
    TrainOptions encoder{};
};

/// One run's split of the world: test videos are the last ceil(V/3) videos
/// of a seeded permutation; the rest form the training pool.
struct RunSplit {
    std::vector<std::size_t> train_videos;
    std::vector<std::size_t> test_videos;
};

inline RunSplit split_videos(std::size_t videos, std::uint64_t run_seed) {
    std::vector<std::size_t> order(videos);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(run_seed, 0x5117));
    for (std::size_t i = videos; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const std::size_t test = (videos + 2) / 3;
    RunSplit s;
    s.train_videos.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(test));
    s.test_videos.assign(order.end() - static_cast<std::ptrdiff_t>(test), order.end());
    return s;
}

/// Seeds A_1 with the middle frame of the first `initial_videos` training
/// videos; all other training frames form U_1.
inline ALState initial_state(const FrameLayout& layout, const RunSplit& split, std::size_t initial_videos,
                             std::uint64_t seed) {
    ALState s;
    s.seed = seed;
    const std::size_t seeded = std::min(initial_videos, split.train_videos.size());
    for (std::size_t k = 0; k < split.train_videos.size(); ++k) {
        const auto v = static_cast<std::uint32_t>(split.train_videos[k]);
        const auto mid = static_cast<std::uint32_t>(layout.frame_count(v) / 2);
        for (std::uint32_t f = 0; f < layout.frame_count(v); ++f) {
            if (k < seeded && f == mid)
                s.labeled.push_back({v, f});
            else
                s.unlabeled.push_back({v, f});
        }
    }
    std::sort(s.labeled.begin(), s.labeled.end());
    std::sort(s.unlabeled.begin(), s.unlabeled.end());
    return s;
}

inline std::vector<std::size_t> global_rows(const FrameLayout& layout, const std::vector<FrameRef>& frames) {
    std::vector<std::size_t> rows;
    rows.reserve(frames.size());
    for (const auto& f : frames) rows.push_back(layout.global(f));
    return rows;
}

inline std::vector<std::size_t> video_rows(const FrameLayout& layout, const std::vector<std::size_t>& videos) {
    std::vector<std::size_t> rows;
    for (std::size_t v : videos)
        for (std::size_t f = 0; f < layout.frame_count(v); ++f) rows.push_back(layout.offset(v) + f);
    std::sort(rows.begin(), rows.end());
    return rows;
}

/// Mean DICE of the proxy's argmax prediction over `test_rows`.
inline double test_dice(const ProxyLearner& l, const std::vector<std::size_t>& test_rows) {
    double s = 0.0;
    for (std::size_t r : test_rows) s += dice(argmax_mask(proxy_predict(l, r)), (*l.masks)[r]);
    return test_rows.empty() ? 0.0 : s / static_cast<double>(test_rows.size());
}

/// Frame entropy under the proxy for every unlabeled frame; other entries are 0.
inline std::vector<double> proxy_entropies(const ProxyLearner& l, const FrameLayout& layout, const ALState& state) {
    std::vector<double> h(layout.total(), 0.0);
    for (const auto& f : state.unlabeled) {
        const std::size_t g = layout.global(f);
        h[g] = frame_entropy(proxy_predict(l, g));
    }
    return h;
}

struct StepRecord {
    int step = 0;  // step index after the selection was annotated
    double dice = 0.0;
    std::vector<FrameRef> picks;
    std::vector<std::string> reasons;
};

/// One AL step: fit on A_t, score U_t, select Q frames, annotate, re-evaluate.
inline StepRecord run_al_step(ALState& state, Strategy strategy, const SyntheticWorld& world,
                              const EmbeddingMatrix& embeddings, const std::vector<std::size_t>& test_rows,
                              const SimulationConfig& cfg) {
    if (state.unlabeled.size() < cfg.budget)
        fail(Errc::BudgetExceedsPool, "pool of " + std::to_string(state.unlabeled.size()) + " < budget");
    const auto learner = fit_proxy(embeddings, world.masks, global_rows(world.layout, state.labeled), cfg.proxy_bandwidth);
    StrategyInput in{world.layout, embeddings, {}, state, cfg.budget,
                     derive_seed(state.seed, static_cast<std::uint64_t>(state.step)), cfg.clustering};
    if (needs_entropy(strategy)) in.entropies = proxy_entropies(learner, world.layout, state);
    Selection sel = select(strategy, in);
    state.annotate(sel.frames);

    const auto refit = fit_proxy(embeddings, world.masks, global_rows(world.layout, state.labeled), cfg.proxy_bandwidth);
    return StepRecord{state.step, test_dice(refit, test_rows), std::move(sel.frames), std::move(sel.reasons)};
}

struct RunRecord {
    Strategy strategy = Strategy::Random;
    std::size_t run = 0;
    std::uint64_t seed = 0;
    ALCurve curve;
    double aualc = 0.0;  // NaN-free only when the curve has >= 2 points
    std::vector<StepRecord> steps;
};

/// Embedding used by strategies and the proxy for a given world.
inline EmbeddingMatrix world_embedding(const SyntheticWorld& world, const SimulationConfig& cfg) {
    EmbeddingMatrix e;
    if (cfg.embedding == EmbeddingSource::Encoder) {
        TrainOptions opt = cfg.encoder;
        opt.batch_pairs = std::min(opt.batch_pairs, world.features.rows());
        e = encode(train_encoder(world.features, opt).encoder, world.features);
    } else {
        e = world.features;
        normalize_rows(e);
    }
    return e;
}

inline std::uint64_t run_seed(const SimulationConfig& cfg, std::size_t run) {
    return derive_seed(cfg.seed, 0x10000 + run);
}

inline RunRecord run_single(const SimulationConfig& cfg, Strategy strategy, std::size_t run, const SyntheticWorld& world,
                            const EmbeddingMatrix& embeddings) {
    RunRecord rec;
    rec.strategy = strategy;
    rec.run = run;
    rec.seed = run_seed(cfg, run);
    const RunSplit split = split_videos(world.layout.video_count(), rec.seed);
    const auto test_rows = video_rows(world.layout, split.test_videos);
    ALState state = initial_state(world.layout, split, cfg.initial_videos, rec.seed);
    if (state.labeled.empty()) fail(Errc::BadParams, "no initial labeled frames");
    if (state.unlabeled.size() < cfg.budget * static_cast<std::size_t>(std::max(cfg.steps, 0)))
        fail(Errc::BadParams, "budget x steps exceeds the training pool");

    const auto full = fit_proxy(embeddings, world.masks, video_rows(world.layout, split.train_videos), cfg.proxy_bandwidth);
    rec.curve.full_data_dice = test_dice(full, test_rows);

    const auto start = fit_proxy(embeddings, world.masks, global_rows(world.layout, state.labeled), cfg.proxy_bandwidth);
    rec.curve.points.push_back({state.step, test_dice(start, test_rows)});
    for (int t = 0; t < cfg.steps; ++t) {
        StepRecord s = run_al_step(state, strategy, world, embeddings, test_rows, cfg);
        rec.curve.points.push_back({s.step, s.dice});
        rec.steps.push_back(std::move(s));
    }
    rec.aualc = rec.curve.points.size() >= 2 ? aualc(rec.curve) : 0.0;
    return rec;
}

struct StrategySummary {
    Strategy strategy = Strategy::Random;
    ALCurve median_curve;       // per-step median DICE; full_data_dice = median reference
    double median_aualc = 0.0;  // median over runs of per-run AuALC
};

struct SimulationResult {
    std::vector<RunRecord> runs;  // sorted by (strategy order given, run)
    std::vector<StrategySummary> summaries;
};

inline StrategySummary summarize(Strategy s, const std::vector<const RunRecord*>& runs) {
    StrategySummary out;
    out.strategy = s;
    if (runs.empty()) return out;
    const std::size_t n = runs.front()->curve.points.size();
    std::vector<double> refs, areas;
    for (const auto* r : runs) {
        refs.push_back(r->curve.full_data_dice);
        areas.push_back(r->aualc);
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d;
        for (const auto* r : runs) d.push_back(r->curve.points[i].dice);
        out.median_curve.points.push_back({runs.front()->curve.points[i].step, median(d)});
    }
    out.median_curve.full_data_dice = median(refs);
    out.median_aualc = median(areas);
    return out;
}

/// Runs every (strategy, run) cell, `jobs` at a time. Output order and
/// values do not depend on `jobs`.
inline SimulationResult run_simulation(const SimulationConfig& cfg, const std::vector<Strategy>& strategies,
                                       unsigned jobs = 1) {
    if (cfg.budget < 1 || cfg.steps < 0 || cfg.runs < 1) fail(Errc::BadParams, "invalid simulation config");
    const SyntheticWorld world = generate_world(cfg.world, cfg.world_seed);
    const EmbeddingMatrix embeddings = world_embedding(world, cfg);

    const std::size_t cells = strategies.size() * cfg.runs;
    std::vector<RunRecord> records(cells);
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t c = next++; c < cells; c = next++) {
            try {
                records[c] = run_single(cfg, strategies[c / cfg.runs], c % cfg.runs, world, embeddings);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    SimulationResult res;
    res.runs = std::move(records);
    for (std::size_t s = 0; s < strategies.size(); ++s) {
        std::vector<const RunRecord*> mine;
        for (std::size_t r = 0; r < cfg.runs; ++r) mine.push_back(&res.runs[s * cfg.runs + r]);
        res.summaries.push_back(summarize(strategies[s], mine));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

/// `strategy,seed,step,dice`, one row per recorded curve point.
inline std::string runs_to_csv(const std::vector<RunRecord>& runs) {
    std::string out = "strategy,seed,step,dice\n";
    for (const auto& r : runs)
        for (const auto& p : r.curve.points)
            out += std::string(strategy_name(r.strategy)) + "," + std::to_string(r.seed) + "," + std::to_string(p.step) +
                   "," + format_fixed6(p.dice) + "\n";
    return out;
}

/// `strategy,seed,aualc`.
inline std::string aualc_to_csv(const std::vector<RunRecord>& runs) {
    std::string out = "strategy,seed,aualc\n";
    for (const auto& r : runs)
        out += std::string(strategy_name(r.strategy)) + "," + std::to_string(r.seed) + "," + format_fixed6(r.aualc) + "\n";
    return out;
}

/// `strategy,seed,full_data_dice`: the reference each run's AuALC is normalized by.
inline std::string references_to_csv(const std::vector<RunRecord>& runs) {
    std::string out = "strategy,seed,full_data_dice\n";
    for (const auto& r : runs)
        out += std::string(strategy_name(r.strategy)) + "," + std::to_string(r.seed) + "," +
               format_fixed6(r.curve.full_data_dice) + "\n";
    return out;
}

} // namespace cowal

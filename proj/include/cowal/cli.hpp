#pragma once

// Command-line front end: gen, embed, select, simulate, eval, plot.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cowal/datamodel.hpp"
#include "cowal/error.hpp"
#include "cowal/plot.hpp"
#include "cowal/representation.hpp"
#include "cowal/scoring.hpp"
#include "cowal/simulator.hpp"
#include "cowal/strategies.hpp"

namespace cowal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::vector<Strategy> parse_strategy_list(const std::string& list) {
    std::vector<Strategy> out;
    for (const auto& name : split_csv_line(list)) {
        if (name.empty()) continue;
        try {
            out.push_back(parse_strategy(name));
        } catch (const Error&) {
            throw UsageError("unknown strategy '" + name + "'");
        }
    }
    if (out.empty()) throw UsageError("no strategies given");
    return out;
}

inline std::vector<FrameRef> read_frame_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::MissingFile, path.string());
    std::vector<FrameRef> frames;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() < 2) fail(Errc::MalformedCsv, path.string() + ": expected video_id,frame_idx");
        try {
            frames.push_back({static_cast<std::uint32_t>(std::stoul(cells[0])),
                              static_cast<std::uint32_t>(std::stoul(cells[1]))});
        } catch (const std::logic_error&) {
            fail(Errc::MalformedCsv, path.string() + ": bad row '" + line + "'");
        }
    }
    return frames;
}

struct GenArgs {
    WorldParams world;
    std::uint64_t seed = 0;
    std::size_t initial_videos = 10;
    double bandwidth = 0.1;
    std::string out;
};

inline void run_gen(const GenArgs& a, std::ostream& out) {
    const SyntheticWorld w = generate_world(a.world, a.seed);
    const fs::path dir(a.out);
    fs::create_directories(dir / "masks");
    fs::create_directories(dir / "probs");
    write_matrix(w.features, dir / "features.bin");
    EmbeddingMatrix emb = w.features;
    normalize_rows(emb);
    write_matrix(emb, dir / "embeddings.bin");

    RunSplit all;
    for (std::size_t v = 0; v < w.layout.video_count(); ++v) all.train_videos.push_back(v);
    const ALState state = initial_state(w.layout, all, a.initial_videos, a.seed);
    const auto learner = fit_proxy(emb, w.masks, global_rows(w.layout, state.labeled), a.bandwidth);

    DatasetManifest m;
    m.embedding_path = dir / "embeddings.bin";
    for (std::size_t v = 0; v < w.layout.video_count(); ++v) {
        VideoEntry ve;
        ve.id = static_cast<std::uint32_t>(v);
        for (std::size_t f = 0; f < w.layout.frame_count(v); ++f) {
            const std::size_t g = w.layout.offset(v) + f;
            const std::string stem = "v" + std::to_string(v) + "_f" + std::to_string(f);
            FrameEntry fe;
            fe.prob_map = dir / "probs" / (stem + ".bin");
            fe.mask = dir / "masks" / (stem + ".pgm");
            fe.labeled = std::binary_search(state.labeled.begin(), state.labeled.end(),
                                            FrameRef{static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(f)});
            write_mask_pgm(w.masks[g], *fe.mask);
            write_prob_map(proxy_predict(learner, g), fe.prob_map);
            ve.frames.push_back(std::move(fe));
        }
        m.videos.push_back(std::move(ve));
    }
    write_manifest(m, dir / "manifest.json");
    out << "wrote " << w.layout.total() << " frames in " << w.layout.video_count() << " videos to "
        << (dir / "manifest.json").string() << "\n";
}

struct EmbedArgs {
    std::string features;
    std::string out;
    std::string checkpoint;
    TrainOptions train;
};

inline void run_embed(const EmbedArgs& a, std::ostream& out) {
    const Matrix<float> features = read_matrix(a.features, /*normalize=*/false);
    TrainOptions opt = a.train;
    if (opt.batch_pairs > features.rows())
        throw UsageError("--batch-pairs " + std::to_string(opt.batch_pairs) + " exceeds " +
                         std::to_string(features.rows()) + " feature rows");
    const TrainResult res = train_encoder(features, opt);
    write_matrix(encode(res.encoder, features), a.out);
    if (!a.checkpoint.empty()) write_encoder(res.encoder, a.checkpoint);
    out << "epoch_loss first=" << format_fixed6(res.epoch_loss.empty() ? 0.0 : res.epoch_loss.front())
        << " last=" << format_fixed6(res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back()) << "\n";
}

struct SelectArgs {
    std::string manifest;
    std::string strategy;
    std::size_t budget = 10;
    std::uint64_t seed = 0;
    std::string embedding;
    std::string labeled;
    std::string out;
    bool no_normalize = false;
    int restarts = 2;
};

inline void run_select(const SelectArgs& a, std::ostream& out) {
    const Strategy strategy = [&] {
        try {
            return parse_strategy(a.strategy);
        } catch (const Error&) {
            throw UsageError("unknown strategy '" + a.strategy + "'");
        }
    }();
    if (a.budget < 1) throw UsageError("--budget must be at least 1");
    if (a.restarts < 1) throw UsageError("--restarts must be at least 1");
    const DatasetManifest m = parse_manifest(a.manifest);
    const FrameLayout layout = m.layout();
    const fs::path emb_path = a.embedding.empty() ? m.embedding_path : fs::path(a.embedding);
    const EmbeddingMatrix emb = read_matrix(emb_path, !a.no_normalize);
    if (emb.rows() != layout.total())
        fail(Errc::InconsistentCounts, emb_path.string() + " has " + std::to_string(emb.rows()) + " rows for " +
                                           std::to_string(layout.total()) + " frames");

    ALState state;
    state.seed = a.seed;
    std::vector<FrameRef> labeled;
    if (!a.labeled.empty()) {
        labeled = read_frame_list(a.labeled);
        for (const auto& f : labeled) layout.global(f);
        std::sort(labeled.begin(), labeled.end());
        labeled.erase(std::unique(labeled.begin(), labeled.end()), labeled.end());
    } else {
        for (const auto& v : m.videos)
            for (std::uint32_t f = 0; f < v.frames.size(); ++f)
                if (v.frames[f].labeled) labeled.push_back({v.id, f});
    }
    for (std::size_t g = 0; g < layout.total(); ++g) {
        const FrameRef f = layout.ref(g);
        if (!std::binary_search(labeled.begin(), labeled.end(), f)) state.unlabeled.push_back(f);
    }
    state.labeled = std::move(labeled);

    StrategyInput in{layout, emb, {}, state, a.budget, a.seed, ClusterOptions{}};
    in.clustering.restarts = a.restarts;
    if (needs_entropy(strategy)) {
        in.entropies.assign(layout.total(), 0.0);
        for (const auto& f : state.unlabeled) in.entropies[layout.global(f)] = frame_entropy(read_prob_map(m.frame(f).prob_map));
    }
    const Selection sel = select(strategy, in);

    std::string text;
    for (std::size_t i = 0; i < sel.frames.size(); ++i)
        text += std::to_string(sel.frames[i].video_id) + "," + std::to_string(sel.frames[i].frame_idx) + "," +
                sel.reasons[i] + "\n";
    if (a.out.empty())
        out << text;
    else
        detail::spit(a.out, text);
}

struct SimulateArgs {
    SimulationConfig config;
    std::string strategies = "random,temporal,entropy,coreset,coreset-x-entropy,suggestive,cowal-center,cowal";
    std::string embedding = "features";
    std::string out = "sim_out";
    unsigned jobs = 1;
};

inline std::string median_table(const SimulationResult& res) {
    std::vector<LabeledCurve> curves;
    for (const auto& s : res.summaries) curves.push_back({std::string(strategy_name(s.strategy)), s.median_curve});
    return curves_to_csv(curves);
}

inline void run_simulate(const SimulateArgs& a, std::ostream& out) {
    SimulationConfig cfg = a.config;
    const auto strategies = parse_strategy_list(a.strategies);
    if (a.embedding == "features")
        cfg.embedding = EmbeddingSource::Features;
    else if (a.embedding == "encoder")
        cfg.embedding = EmbeddingSource::Encoder;
    else
        throw UsageError("--embedding must be 'features' or 'encoder'");
    if (cfg.budget < 1 || cfg.runs < 1 || cfg.steps < 0) throw UsageError("--budget and --runs must be >= 1, --steps >= 0");
    const std::size_t train_videos = cfg.world.videos - (cfg.world.videos + 2) / 3;
    const std::size_t seeded = std::min(cfg.initial_videos, train_videos);
    if (cfg.budget * static_cast<std::size_t>(cfg.steps) + seeded > train_videos * cfg.world.frames)
        throw UsageError("budget x steps + initial frames exceeds the training pool");

    const SimulationResult res = run_simulation(cfg, strategies, a.jobs);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    detail::spit(dir / "runs.csv", runs_to_csv(res.runs));
    detail::spit(dir / "aualc.csv", aualc_to_csv(res.runs));
    detail::spit(dir / "reference.csv", references_to_csv(res.runs));
    detail::spit(dir / "median_curves.csv", median_table(res));
    out << "strategy,median_aualc\n";
    for (const auto& s : res.summaries) out << strategy_name(s.strategy) << "," << format_fixed6(s.median_aualc) << "\n";
}

struct EvalRow {
    std::string strategy;
    double median_aualc = 0.0;
    double mean_aualc = 0.0;
    std::size_t runs = 0;
};

/// Recomputes per-run AuALC from `runs.csv` and `reference.csv`.
inline std::vector<EvalRow> evaluate_runs(const std::string& runs_csv, const std::string& reference_csv) {
    std::map<std::pair<std::string, std::string>, double> reference;
    {
        std::istringstream in(reference_csv);
        std::string line;
        std::getline(in, line);
        if (line != "strategy,seed,full_data_dice") fail(Errc::MalformedCsv, "reference header");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto c = split_csv_line(line);
            if (c.size() != 3) fail(Errc::MalformedCsv, "reference row: " + line);
            try {
                reference[{c[0], c[1]}] = std::stod(c[2]);
            } catch (const std::logic_error&) {
                fail(Errc::MalformedCsv, "reference row: " + line);
            }
        }
    }
    std::vector<std::string> order;
    std::map<std::string, std::map<std::string, ALCurve>> curves;  // strategy -> seed -> curve
    std::map<std::string, std::vector<std::string>> seed_order;
    {
        std::istringstream in(runs_csv);
        std::string line;
        std::getline(in, line);
        if (line != "strategy,seed,step,dice") fail(Errc::MalformedCsv, "runs header");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto c = split_csv_line(line);
            if (c.size() != 4) fail(Errc::MalformedCsv, "runs row: " + line);
            if (!curves.count(c[0])) order.push_back(c[0]);
            auto& by_seed = curves[c[0]];
            if (!by_seed.count(c[1])) seed_order[c[0]].push_back(c[1]);
            try {
                by_seed[c[1]].points.push_back({std::stoi(c[2]), std::stod(c[3])});
            } catch (const std::logic_error&) {
                fail(Errc::MalformedCsv, "runs row: " + line);
            }
        }
    }
    std::vector<EvalRow> rows;
    for (const auto& s : order) {
        std::vector<double> areas;
        for (const auto& seed : seed_order[s]) {
            ALCurve c = curves[s][seed];
            const auto it = reference.find({s, seed});
            if (it == reference.end()) fail(Errc::MalformedCsv, "no reference for " + s + "," + seed);
            c.full_data_dice = it->second;
            areas.push_back(aualc(c));
        }
        EvalRow r;
        r.strategy = s;
        r.runs = areas.size();
        r.median_aualc = median(areas);
        for (double x : areas) r.mean_aualc += x / static_cast<double>(areas.size());
        rows.push_back(r);
    }
    return rows;
}

struct EvalArgs {
    std::string dir = "sim_out";
    std::string out;
};

inline void run_eval(const EvalArgs& a, std::ostream& out) {
    const fs::path dir(a.dir);
    const auto rows = evaluate_runs(detail::slurp(dir / "runs.csv"), detail::slurp(dir / "reference.csv"));
    std::string text = "strategy,median_aualc,mean_aualc,runs\n";
    for (const auto& r : rows)
        text += r.strategy + "," + format_fixed6(r.median_aualc) + "," + format_fixed6(r.mean_aualc) + "," +
                std::to_string(r.runs) + "\n";
    out << text;
    if (!a.out.empty()) detail::spit(a.out, text);
}

/// Parses argv and runs one subcommand. Never throws.
inline int run_command(const std::vector<std::string>& argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    CLI::App app{"Correlation-aware batch active learning for video frames", "cowal"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate a synthetic correlated-video dataset");
    g->add_option("--videos", gen.world.videos, "number of videos")->capture_default_str();
    g->add_option("--frames", gen.world.frames, "frames per video")->capture_default_str();
    g->add_option("--step", gen.world.step, "random-walk step size")->capture_default_str();
    g->add_option("--grid", gen.world.grid, "mask side length")->capture_default_str();
    g->add_option("--radius", gen.world.radius, "disk radius")->capture_default_str();
    g->add_option("--feature-dims", gen.world.feature_dims, "feature dimension")->capture_default_str();
    g->add_option("--noise", gen.world.feature_noise, "feature noise stddev")->capture_default_str();
    g->add_option("--scenes", gen.world.scenes, "shared scene centers")->capture_default_str();
    g->add_option("--scene-spread", gen.world.scene_spread, "video start spread around a scene")->capture_default_str();
    g->add_option("--initial-videos", gen.initial_videos, "videos seeded with their middle frame")->capture_default_str();
    g->add_option("--bandwidth", gen.bandwidth, "proxy confidence bandwidth")->capture_default_str();
    g->add_option("--seed", gen.seed, "world seed")->capture_default_str();
    g->add_option("-o,--out", gen.out, "output directory")->required();

    EmbedArgs emb;
    auto* e = app.add_subcommand("embed", "train the contrastive encoder and write an embedding file");
    e->add_option("--features", emb.features, "feature matrix (COWEMB1)")->required();
    e->add_option("-o,--out", emb.out, "output embedding file")->required();
    e->add_option("--checkpoint", emb.checkpoint, "write encoder checkpoint here");
    e->add_option("--epochs", emb.train.epochs)->capture_default_str();
    e->add_option("--lr", emb.train.lr)->capture_default_str();
    e->add_option("--batch-pairs", emb.train.batch_pairs)->capture_default_str();
    e->add_option("--tau", emb.train.temperature)->capture_default_str();
    e->add_option("--jitter", emb.train.jitter)->capture_default_str();
    e->add_option("--hidden", emb.train.hidden)->capture_default_str();
    e->add_option("--dims", emb.train.d_out)->capture_default_str();
    e->add_option("--seed", emb.train.seed)->capture_default_str();

    SelectArgs sel;
    auto* s = app.add_subcommand("select", "select the next batch of frames to annotate");
    s->add_option("--manifest", sel.manifest, "dataset manifest")->required();
    s->add_option("--strategy", sel.strategy, "strategy id")->required();
    s->add_option("--budget", sel.budget, "frames to select")->capture_default_str();
    s->add_option("--seed", sel.seed)->capture_default_str();
    s->add_option("--embedding", sel.embedding, "embedding file overriding the manifest's");
    s->add_option("--labeled", sel.labeled, "CSV of video_id,frame_idx overriding the manifest's labeled flags");
    s->add_option("--restarts", sel.restarts, "k-means++ restarts")->capture_default_str();
    s->add_flag("--no-normalize", sel.no_normalize, "use embeddings without unit-norm rescaling");
    s->add_option("-o,--out", sel.out, "write selection here instead of stdout");

    SimulateArgs sim;
    auto* m = app.add_subcommand("simulate", "run the AL loop on a synthetic world");
    m->add_option("--strategies", sim.strategies, "comma-separated strategy ids")->capture_default_str();
    m->add_option("--runs", sim.config.runs)->capture_default_str();
    m->add_option("--steps", sim.config.steps)->capture_default_str();
    m->add_option("--budget", sim.config.budget)->capture_default_str();
    m->add_option("--initial-videos", sim.config.initial_videos)->capture_default_str();
    m->add_option("--videos", sim.config.world.videos)->capture_default_str();
    m->add_option("--frames", sim.config.world.frames)->capture_default_str();
    m->add_option("--step", sim.config.world.step)->capture_default_str();
    m->add_option("--noise", sim.config.world.feature_noise)->capture_default_str();
    m->add_option("--scenes", sim.config.world.scenes)->capture_default_str();
    m->add_option("--bandwidth", sim.config.proxy_bandwidth)->capture_default_str();
    m->add_option("--restarts", sim.config.clustering.restarts)->capture_default_str();
    m->add_option("--world-seed", sim.config.world_seed)->capture_default_str();
    m->add_option("--seed", sim.config.seed)->capture_default_str();
    m->add_option("--embedding", sim.embedding, "features | encoder")->capture_default_str();
    m->add_option("--jobs", sim.jobs, "parallel (strategy, run) cells")->capture_default_str();
    m->add_option("-o,--out", sim.out, "output directory")->capture_default_str();

    EvalArgs ev;
    auto* v = app.add_subcommand("eval", "compute AuALC per strategy from simulate output");
    v->add_option("--dir", ev.dir, "simulate output directory")->capture_default_str();
    v->add_option("-o,--out", ev.out, "also write the table here");

    std::string plot_in, plot_out;
    auto* p = app.add_subcommand("plot", "render a curve CSV as SVG");
    p->add_option("--curves", plot_in, "curve CSV (step,<labels>)")->required();
    p->add_option("-o,--out", plot_out, "SVG path")->required();

    std::vector<std::string> args(argv.rbegin(), argv.rend());
    if (!args.empty()) args.pop_back();  // program name
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex, out, err);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex, out, err);
        return kExitUsage;
    }

    try {
        if (g->parsed()) run_gen(gen, out);
        else if (e->parsed()) run_embed(emb, out);
        else if (s->parsed()) run_select(sel, out);
        else if (m->parsed()) run_simulate(sim, out);
        else if (v->parsed()) run_eval(ev, out);
        else if (p->parsed()) emit_plot(plot_in, plot_out);
    } catch (const UsageError& ex) {
        err << "error: usage: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        if (ex.code() == Errc::BadParams || ex.code() == Errc::UnknownStrategy) return kExitUsage;
        return is_numeric_failure(ex.code()) ? kExitNumeric : kExitData;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

} // namespace cowal::cli

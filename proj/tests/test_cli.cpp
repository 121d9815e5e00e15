#include <fstream>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

#include "cowal/cli.hpp"
#include "support.hpp"

using namespace cowal;
using testing_support::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "cowal");
    std::ostringstream out, err;
    const int code = cli::run_command(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

// small world written by `gen`
fs::path generated(const TempDir& dir) {
    const auto o = run({"gen", "--videos", "5", "--frames", "12", "--grid", "8", "--step", "0.02", "--seed", "7",
                        "--initial-videos", "3", "-o", (dir / "world").string()});
    EXPECT_EQ(o.code, 0) << o.err;
    return dir / "world";
}

std::string curve_csv(std::size_t strategies, int steps) {
    std::string s = "step";
    for (std::size_t k = 0; k < strategies; ++k) s += ",s" + std::to_string(k);
    s += "\n";
    for (int t = 1; t <= steps; ++t) {
        s += std::to_string(t);
        for (std::size_t k = 0; k < strategies; ++k) s += "," + format_fixed6(0.1 * t + 0.01 * static_cast<double>(k));
        s += "\n";
    }
    return s;
}

} // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}).code, cli::kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"select", "--strategy", "cowal"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"simulate", "--budget", "ten"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"simulate", "--strategies", "cowal,vaal"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"simulate", "--embedding", "pixels"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"simulate", "--budget", "1000"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(Cli, GenWritesTheDataset) {
    TempDir dir;
    const auto w = generated(dir);
    const auto m = parse_manifest(w / "manifest.json");
    EXPECT_EQ(m.videos.size(), 5u);
    EXPECT_EQ(m.total_frames(), 60u);
    std::size_t labeled = 0;
    for (const auto& v : m.videos)
        for (const auto& f : v.frames) {
            labeled += f.labeled;
            EXPECT_TRUE(fs::exists(*f.mask));
            EXPECT_TRUE(fs::exists(f.prob_map));
        }
    EXPECT_EQ(labeled, 3u);
    EXPECT_EQ(read_matrix(m.embedding_path).rows(), 60u);
    EXPECT_TRUE(fs::exists(w / "features.bin"));
}

TEST(Cli, SelectPrintsBudgetUnlabeledLines) {
    TempDir dir;
    const auto w = generated(dir);
    const auto m = parse_manifest(w / "manifest.json");
    for (Strategy s : kAllStrategies) {
        const auto o = run({"select", "--manifest", (w / "manifest.json").string(), "--strategy",
                            std::string(strategy_name(s)), "--budget", "6", "--seed", "1"});
        ASSERT_EQ(o.code, 0) << strategy_name(s) << ": " << o.err;
        const auto ls = lines(o.out);
        ASSERT_EQ(ls.size(), 6u) << o.out;
        std::set<std::string> seen;
        for (const auto& l : ls) {
            std::smatch g;
            ASSERT_TRUE(std::regex_match(l, g, std::regex(R"((\d+),(\d+),(.+))"))) << l;
            const FrameRef f{static_cast<std::uint32_t>(std::stoul(g[1])), static_cast<std::uint32_t>(std::stoul(g[2]))};
            EXPECT_FALSE(m.frame(f).labeled) << l;
            EXPECT_TRUE(seen.insert(g[1].str() + "," + g[2].str()).second);
        }
        EXPECT_EQ(o.out, run({"select", "--manifest", (w / "manifest.json").string(), "--strategy",
                              std::string(strategy_name(s)), "--budget", "6", "--seed", "1"}).out);
    }
}

TEST(Cli, SelectWithLabeledOverrideAndOutputFile) {
    TempDir dir;
    const auto w = generated(dir);
    {
        std::ofstream f(dir / "labeled.csv");
        f << "video_id,frame_idx\n0,0\n0,1\n4,11\n";
    }
    const auto o = run({"select", "--manifest", (w / "manifest.json").string(), "--strategy", "coreset", "--budget",
                        "57", "--labeled", (dir / "labeled.csv").string(), "-o", (dir / "sel.csv").string()});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto ls = lines(slurp(dir / "sel.csv"));
    EXPECT_EQ(ls.size(), 57u);
    for (const auto& l : ls) {
        EXPECT_NE(l.rfind("0,0,", 0), 0u);
        EXPECT_NE(l.rfind("0,1,", 0), 0u);
        EXPECT_NE(l.rfind("4,11,", 0), 0u);
    }
    EXPECT_EQ(run({"select", "--manifest", (w / "manifest.json").string(), "--strategy", "coreset", "--budget", "58",
                   "--labeled", (dir / "labeled.csv").string()})
                  .code,
              cli::kExitData);
}

TEST(Cli, SelectDataErrorsExitThree) {
    TempDir dir;
    EXPECT_EQ(run({"select", "--manifest", (dir / "missing.json").string(), "--strategy", "cowal"}).code,
              cli::kExitData);
    {
        std::ofstream f(dir / "bad.json");
        f << "{\"videos\": 3}";
    }
    EXPECT_EQ(run({"select", "--manifest", (dir / "bad.json").string(), "--strategy", "cowal"}).code, cli::kExitData);
}

TEST(Cli, EmbedTrainsAndWritesCheckpoint) {
    TempDir dir;
    const auto w = generated(dir);
    const auto o = run({"embed", "--features", (w / "features.bin").string(), "-o", (dir / "emb.bin").string(),
                        "--checkpoint", (dir / "enc.bin").string(), "--epochs", "3", "--batch-pairs", "16", "--hidden",
                        "8", "--dims", "4", "--seed", "2"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto e = read_matrix(dir / "emb.bin");
    EXPECT_EQ(e.rows(), 60u);
    EXPECT_EQ(e.cols(), 4u);
    EXPECT_EQ(read_encoder(dir / "enc.bin").d_out, 4u);
    EXPECT_EQ(run({"embed", "--features", (w / "features.bin").string(), "-o", (dir / "x.bin").string(),
                   "--batch-pairs", "999"})
                  .code,
              cli::kExitUsage);
}

TEST(Cli, NumericFailureExitsFour) {
    TempDir dir;
    // all-zero embeddings, unnormalized: cosine similarity has nothing to work with
    const auto w = generated(dir);
    EmbeddingMatrix zeros(60, 3, 0.0f);
    write_matrix(zeros, dir / "zeros.bin");
    const auto o = run({"select", "--manifest", (w / "manifest.json").string(), "--strategy", "suggestive",
                        "--embedding", (dir / "zeros.bin").string(), "--no-normalize", "--budget", "2"});
    EXPECT_EQ(o.code, cli::kExitNumeric) << o.err;
}

TEST(Cli, SimulateIsReproducibleAndEvalAgrees) {
    TempDir dir;
    const std::vector<std::string> base = {"simulate", "--strategies", "cowal,random,entropy", "--runs", "3", "--steps",
                                           "3", "--budget", "3", "--videos", "6", "--frames", "12", "--seed", "4"};
    auto a = base, b = base;
    a.insert(a.end(), {"-o", (dir / "a").string()});
    b.insert(b.end(), {"-o", (dir / "b").string(), "--jobs", "3"});
    const auto oa = run(a), ob = run(b);
    ASSERT_EQ(oa.code, 0) << oa.err;
    ASSERT_EQ(ob.code, 0) << ob.err;
    EXPECT_EQ(oa.out, ob.out);
    for (const char* f : {"runs.csv", "aualc.csv", "reference.csv", "median_curves.csv"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_EQ(lines(slurp(dir / "a" / "runs.csv")).size(), 1u + 3 * 3 * 4);

    const auto ev = run({"eval", "--dir", (dir / "a").string()});
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto sim_rows = lines(oa.out), eval_rows = lines(ev.out);
    ASSERT_EQ(eval_rows.size(), 4u);
    EXPECT_EQ(eval_rows[0], "strategy,median_aualc,mean_aualc,runs");
    for (std::size_t i = 1; i < 4; ++i) {
        const auto s = split_csv_line(sim_rows[i]), e = split_csv_line(eval_rows[i]);
        EXPECT_EQ(s[0], e[0]);
        EXPECT_NEAR(std::stod(s[1]), std::stod(e[1]), 5e-6);  // eval works from 6-decimal CSVs
        EXPECT_EQ(e[3], "3");
    }
    EXPECT_EQ(run({"eval", "--dir", (dir / "nowhere").string()}).code, cli::kExitData);

    const auto plot = run({"plot", "--curves", (dir / "a" / "median_curves.csv").string(), "-o",
                           (dir / "a.svg").string()});
    EXPECT_EQ(plot.code, 0) << plot.err;
}

TEST(Cli, PlotEightStrategies) {
    TempDir dir;
    {
        std::ofstream f(dir / "c.csv");
        f << curve_csv(8, 6);
    }
    ASSERT_EQ(run({"plot", "--curves", (dir / "c.csv").string(), "-o", (dir / "c.svg").string()}).code, 0);
    const std::string svg = slurp(dir / "c.svg");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::vector<std::string> legend;
    const std::regex leg(R"re(<text class="legend"[^>]*>([^<]*)</text>)re");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), leg); it != std::sregex_iterator(); ++it)
        legend.push_back((*it)[1]);
    EXPECT_EQ(legend, (std::vector<std::string>{"s0", "s1", "s2", "s3", "s4", "s5", "s6", "s7"}));
    const std::regex poly(R"re(<polyline[^>]*points="([^"]*)")re");
    int polylines = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it) {
        ++polylines;
        const std::string pts = (*it)[1];
        EXPECT_EQ(std::count(pts.begin(), pts.end(), ' '), 5);
    }
    EXPECT_EQ(polylines, 8);
    EXPECT_NE(svg.find(">AL step<"), std::string::npos);
    EXPECT_NE(svg.find(">DICE<"), std::string::npos);

    ASSERT_EQ(run({"plot", "--curves", (dir / "c.csv").string(), "-o", (dir / "d.svg").string()}).code, 0);
    EXPECT_EQ(slurp(dir / "d.svg"), svg);
}

TEST(Cli, PlotSingleCurveAndMalformedInput) {
    TempDir dir;
    {
        std::ofstream f(dir / "one.csv");
        f << curve_csv(1, 2);
        std::ofstream g(dir / "bad.csv");
        g << "step,a\n1,0.5,0.7\n";
    }
    ASSERT_EQ(run({"plot", "--curves", (dir / "one.csv").string(), "-o", (dir / "one.svg").string()}).code, 0);
    const std::string svg = slurp(dir / "one.svg");
    std::smatch m;
    ASSERT_TRUE(std::regex_search(svg, m, std::regex(R"re(<polyline[^>]*points="([^"]*)")re")));
    EXPECT_EQ(std::count(m[1].first, m[1].second, ','), 2);
    EXPECT_EQ(run({"plot", "--curves", (dir / "bad.csv").string(), "-o", (dir / "bad.svg").string()}).code,
              cli::kExitData);
}

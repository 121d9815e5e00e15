#pragma once

// Core domain types and their on-disk formats.
//
//   Embedding file    "COWEMB1" u32 rows u32 dims, rows*dims f32, row-major
//   Probability file  "COWPRB1" u32 height u32 width u32 classes, h*w*c f32,
//                     pixel-major then class
//   Mask file         binary PGM (P5), maxval 255, pixel value = class id
//
// All integers and floats are little-endian regardless of host order.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cowal/error.hpp"
#include "cowal/matrix.hpp"

namespace cowal {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Frames and layout
// ---------------------------------------------------------------------------

struct FrameRef {
    std::uint32_t video_id = 0;
    std::uint32_t frame_idx = 0;

    auto operator<=>(const FrameRef&) const = default;
};

/// Maps (video_id, frame_idx) to a flat row index in cumulative video order.
class FrameLayout {
public:
    FrameLayout() = default;
    explicit FrameLayout(std::vector<std::size_t> frame_counts) : counts_(std::move(frame_counts)) {
        offsets_.reserve(counts_.size() + 1);
        offsets_.push_back(0);
        for (std::size_t c : counts_) offsets_.push_back(offsets_.back() + c);
    }

    std::size_t video_count() const noexcept { return counts_.size(); }
    std::size_t frame_count(std::size_t video) const { return counts_.at(video); }
    std::size_t total() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
    std::size_t offset(std::size_t video) const { return offsets_.at(video); }

    bool contains(FrameRef f) const {
        return f.video_id < counts_.size() && f.frame_idx < counts_[f.video_id];
    }

    std::size_t global(FrameRef f) const {
        if (!contains(f))
            fail(Errc::SchemaViolation, "frame (" + std::to_string(f.video_id) + "," +
                                            std::to_string(f.frame_idx) + ") outside layout");
        return offsets_[f.video_id] + f.frame_idx;
    }

    FrameRef ref(std::size_t global_index) const {
        auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global_index);
        const auto video = static_cast<std::size_t>(std::distance(offsets_.begin(), it)) - 1;
        return {static_cast<std::uint32_t>(video),
                static_cast<std::uint32_t>(global_index - offsets_[video])};
    }

    const std::vector<std::size_t>& counts() const noexcept { return counts_; }

private:
    std::vector<std::size_t> counts_;
    std::vector<std::size_t> offsets_;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

using EmbeddingMatrix = Matrix<float>;

inline void check_finite(const EmbeddingMatrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (float v : m.row(i))
            if (!std::isfinite(v)) fail(Errc::NonFiniteValue, "row " + std::to_string(i));
}

/// Scale every row to unit Euclidean norm. Rows of norm zero are rejected.
inline void normalize_rows(EmbeddingMatrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        const double n = std::sqrt(squared_norm(r));
        if (!(n > 0.0)) fail(Errc::ZeroNormRow, "row " + std::to_string(i));
        if (n == 1.0) continue;
        for (float& v : r) v = static_cast<float>(static_cast<double>(v) / n);
    }
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class ByteReader {
public:
    ByteReader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

    void expect_magic(std::string_view magic) {
        if (bytes_.size() < magic.size() || std::string_view(bytes_).substr(0, magic.size()) != magic)
            fail(Errc::BadMagic, name_ + ": expected " + std::string(magic));
        pos_ = magic.size();
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail(Errc::TruncatedFile, name_);
    }

private:
    std::string bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

inline std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::MissingFile, path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::IoFailure, "write failed: " + path.string());
}

inline constexpr std::string_view kEmbeddingMagic = "COWEMB1";
inline constexpr std::string_view kProbabilityMagic = "COWPRB1";

} // namespace detail

inline std::string encode_matrix(const EmbeddingMatrix& m) {
    std::string out(detail::kEmbeddingMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.reserve(out.size() + 4 * m.data().size());
    for (float v : m.data()) detail::put_f32(out, v);
    return out;
}

inline EmbeddingMatrix decode_matrix(std::string bytes, bool normalize = true, std::string name = "matrix") {
    detail::ByteReader in(std::move(bytes), name);
    in.expect_magic(detail::kEmbeddingMagic);
    const std::size_t rows = in.u32();
    const std::size_t dims = in.u32();
    in.need(rows * dims * 4);
    EmbeddingMatrix m(rows, dims);
    for (float& v : m.data()) v = in.f32();
    check_finite(m);
    if (normalize) normalize_rows(m);
    return m;
}

/// Reads an embedding file. Rows are re-normalized to unit length unless
/// `normalize` is false.
inline EmbeddingMatrix read_matrix(const fs::path& path, bool normalize = true) {
    return decode_matrix(detail::slurp(path), normalize, path.string());
}

inline void write_matrix(const EmbeddingMatrix& m, const fs::path& path) {
    detail::spit(path, encode_matrix(m));
}

/// Row count from the header only, without loading the payload.
inline std::size_t peek_matrix_rows(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::MissingFile, path.string());
    std::string head(detail::kEmbeddingMagic.size() + 8, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    detail::ByteReader r(std::move(head), path.string());
    r.expect_magic(detail::kEmbeddingMagic);
    return r.u32();
}

// ---------------------------------------------------------------------------
// Probability maps and masks
// ---------------------------------------------------------------------------

struct ProbabilityMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t classes = 0;
    std::vector<float> data;  // pixel-major, then class

    std::size_t pixels() const noexcept { return height * width; }
    std::span<const float> pixel(std::size_t p) const { return {data.data() + p * classes, classes}; }
    std::span<float> pixel(std::size_t p) { return {data.data() + p * classes, classes}; }
};

inline constexpr double kDistributionTolerance = 1e-5;
inline constexpr double kRenormWindow = 1e-3;

/// Validates every pixel distribution; sums within the renormalization window
/// are rescaled to exactly one.
inline void normalize_distributions(ProbabilityMap& m) {
    for (std::size_t p = 0; p < m.pixels(); ++p) {
        auto px = m.pixel(p);
        double sum = 0.0;
        for (float v : px) {
            if (!std::isfinite(v) || v < 0.0f)
                fail(Errc::NotADistribution, "pixel " + std::to_string(p) + " has invalid entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRenormWindow)
            fail(Errc::NotADistribution,
                 "pixel " + std::to_string(p) + " sums to " + std::to_string(sum));
        if (std::abs(sum - 1.0) > kDistributionTolerance)
            for (float& v : px) v = static_cast<float>(v / sum);
    }
}

inline std::string encode_prob_map(const ProbabilityMap& m) {
    std::string out(detail::kProbabilityMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(m.height));
    detail::put_u32(out, static_cast<std::uint32_t>(m.width));
    detail::put_u32(out, static_cast<std::uint32_t>(m.classes));
    for (float v : m.data) detail::put_f32(out, v);
    return out;
}

inline ProbabilityMap decode_prob_map(std::string bytes, std::string name = "prob_map") {
    detail::ByteReader in(std::move(bytes), name);
    in.expect_magic(detail::kProbabilityMagic);
    ProbabilityMap m;
    m.height = in.u32();
    m.width = in.u32();
    const std::size_t stored = in.u32();
    if (stored == 0) fail(Errc::NotADistribution, name + ": zero classes");
    in.need(m.pixels() * stored * 4);
    std::vector<float> raw(m.pixels() * stored);
    for (float& v : raw) v = in.f32();
    if (stored == 1) {
        // Sigmoid output: p is the probability of the first class.
        m.classes = 2;
        m.data.resize(m.pixels() * 2);
        for (std::size_t p = 0; p < m.pixels(); ++p) {
            const float v = raw[p];
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                fail(Errc::NotADistribution, name + ": sigmoid value out of [0,1] at pixel " + std::to_string(p));
            m.data[2 * p] = v;
            m.data[2 * p + 1] = static_cast<float>(1.0 - static_cast<double>(v));
        }
    } else {
        m.classes = stored;
        m.data = std::move(raw);
    }
    normalize_distributions(m);
    return m;
}

inline ProbabilityMap read_prob_map(const fs::path& path) {
    return decode_prob_map(detail::slurp(path), path.string());
}

inline void write_prob_map(const ProbabilityMap& m, const fs::path& path) {
    detail::spit(path, encode_prob_map(m));
}

struct LabelMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    std::size_t pixels() const noexcept { return height * width; }
    bool operator==(const LabelMask&) const = default;
};

inline void write_mask_pgm(const LabelMask& m, const fs::path& path) {
    std::string out = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n255\n";
    out.append(m.data.begin(), m.data.end());
    detail::spit(path, out);
}

inline LabelMask read_mask_pgm(const fs::path& path) {
    const std::string bytes = detail::slurp(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip_space();
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) fail(Errc::SchemaViolation, path.string() + ": malformed PGM header");
        return std::stoul(bytes.substr(start, pos - start));
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail(Errc::BadMagic, path.string() + ": not a P5 PGM");
    pos = 2;
    LabelMask m;
    m.width = number();
    m.height = number();
    const std::size_t maxval = number();
    if (maxval != 255) fail(Errc::SchemaViolation, path.string() + ": maxval must be 255");
    ++pos;  // single whitespace before raster
    if (bytes.size() < pos + m.pixels()) fail(Errc::TruncatedFile, path.string());
    m.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + m.pixels()));
    return m;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct FrameEntry {
    fs::path prob_map;
    std::optional<fs::path> mask;
    bool labeled = false;
};

struct VideoEntry {
    std::uint32_t id = 0;
    std::vector<FrameEntry> frames;
};

struct DatasetManifest {
    std::vector<VideoEntry> videos;  // sorted by id, ids dense 0..V-1
    fs::path embedding_path;

    FrameLayout layout() const {
        std::vector<std::size_t> counts;
        counts.reserve(videos.size());
        for (const auto& v : videos) counts.push_back(v.frames.size());
        return FrameLayout(std::move(counts));
    }

    std::size_t total_frames() const {
        std::size_t n = 0;
        for (const auto& v : videos) n += v.frames.size();
        return n;
    }

    const FrameEntry& frame(FrameRef f) const { return videos.at(f.video_id).frames.at(f.frame_idx); }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) fail(Errc::SchemaViolation, where + ": missing '" + key + "'");
    return obj.at(key);
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline void require_exists(const fs::path& p) {
    if (!fs::exists(p)) fail(Errc::MissingFile, p.string());
}

} // namespace detail

/// Parses a manifest from JSON text. Relative paths resolve against `base_dir`.
/// When `check_files` is set every referenced file must exist and the
/// embedding row count must equal the total frame count.
inline DatasetManifest parse_manifest_text(const std::string& text, const fs::path& base_dir,
                                           bool check_files = true) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(Errc::SchemaViolation, std::string("manifest is not valid JSON: ") + e.what());
    }
    DatasetManifest m;
    const auto& emb = detail::require(j, "embedding_path", "manifest");
    if (!emb.is_string()) fail(Errc::SchemaViolation, "embedding_path must be a string");
    m.embedding_path = detail::resolve(base_dir, emb.get<std::string>());

    const auto& videos = detail::require(j, "videos", "manifest");
    if (!videos.is_array()) fail(Errc::SchemaViolation, "videos must be an array");
    std::vector<bool> seen(videos.size(), false);
    for (const auto& v : videos) {
        const auto& id = detail::require(v, "id", "video");
        if (!id.is_number_unsigned()) fail(Errc::SchemaViolation, "video id must be a non-negative integer");
        const auto vid = id.get<std::uint64_t>();
        if (vid >= videos.size())
            fail(Errc::SchemaViolation, "video ids must be dense 0..V-1, got " + std::to_string(vid));
        if (seen[vid]) fail(Errc::SchemaViolation, "duplicate video id " + std::to_string(vid));
        seen[vid] = true;

        VideoEntry entry;
        entry.id = static_cast<std::uint32_t>(vid);
        const std::string where = "video " + std::to_string(vid);
        const auto& frames = detail::require(v, "frames", where);
        if (!frames.is_array()) fail(Errc::SchemaViolation, where + ": frames must be an array");
        for (std::size_t f = 0; f < frames.size(); ++f) {
            const auto& fr = frames[f];
            const std::string fwhere = where + " frame " + std::to_string(f);
            const auto& prob = detail::require(fr, "prob_map", fwhere);
            if (!prob.is_string()) fail(Errc::SchemaViolation, fwhere + ": prob_map must be a string");
            FrameEntry fe;
            fe.prob_map = detail::resolve(base_dir, prob.get<std::string>());
            if (fr.contains("mask")) {
                if (!fr["mask"].is_string()) fail(Errc::SchemaViolation, fwhere + ": mask must be a string");
                fe.mask = detail::resolve(base_dir, fr["mask"].get<std::string>());
            }
            if (fr.contains("labeled")) {
                if (!fr["labeled"].is_boolean()) fail(Errc::SchemaViolation, fwhere + ": labeled must be a boolean");
                fe.labeled = fr["labeled"].get<bool>();
            }
            if (fr.contains("idx")) {
                if (!fr["idx"].is_number_unsigned() || fr["idx"].get<std::uint64_t>() != f)
                    fail(Errc::SchemaViolation, fwhere + ": idx must equal its position");
            }
            entry.frames.push_back(std::move(fe));
        }
        m.videos.push_back(std::move(entry));
    }
    std::sort(m.videos.begin(), m.videos.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    if (check_files) {
        detail::require_exists(m.embedding_path);
        for (const auto& v : m.videos)
            for (const auto& f : v.frames) {
                detail::require_exists(f.prob_map);
                if (f.mask) detail::require_exists(*f.mask);
            }
        const std::size_t rows = peek_matrix_rows(m.embedding_path);
        if (rows != m.total_frames())
            fail(Errc::InconsistentCounts, "embedding has " + std::to_string(rows) + " rows, manifest lists " +
                                               std::to_string(m.total_frames()) + " frames");
    }
    return m;
}

inline DatasetManifest parse_manifest(const fs::path& path) {
    if (!fs::exists(path)) fail(Errc::MissingFile, path.string());
    return parse_manifest_text(detail::slurp(path), path.parent_path());
}

/// Serializes with paths relative to `base_dir` where possible.
inline std::string manifest_to_json(const DatasetManifest& m, const fs::path& base_dir) {
    auto rel = [&](const fs::path& p) { return p.lexically_relative(base_dir).generic_string(); };
    nlohmann::ordered_json j;
    j["embedding_path"] = rel(m.embedding_path);
    j["videos"] = nlohmann::ordered_json::array();
    for (const auto& v : m.videos) {
        nlohmann::ordered_json jv;
        jv["id"] = v.id;
        jv["frames"] = nlohmann::ordered_json::array();
        for (std::size_t f = 0; f < v.frames.size(); ++f) {
            const auto& fe = v.frames[f];
            nlohmann::ordered_json jf;
            jf["idx"] = f;
            jf["prob_map"] = rel(fe.prob_map);
            if (fe.mask) jf["mask"] = rel(*fe.mask);
            if (fe.labeled) jf["labeled"] = true;
            jv["frames"].push_back(std::move(jf));
        }
        j["videos"].push_back(std::move(jv));
    }
    return j.dump(1) + "\n";
}

inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
    detail::spit(path, manifest_to_json(m, path.parent_path()));
}

// ---------------------------------------------------------------------------
// Active-learning state and curves
// ---------------------------------------------------------------------------

/// Labeled set A_t and unlabeled pool U_t, both kept sorted.
struct ALState {
    std::vector<FrameRef> labeled;
    std::vector<FrameRef> unlabeled;
    int step = 1;
    std::uint64_t seed = 0;

    /// Moves `picked` from U to A and advances the step.
    void annotate(std::span<const FrameRef> picked) {
        std::vector<FrameRef> p(picked.begin(), picked.end());
        std::sort(p.begin(), p.end());
        if (std::adjacent_find(p.begin(), p.end()) != p.end())
            fail(Errc::SchemaViolation, "duplicate frame in annotation batch");
        std::vector<FrameRef> rest;
        rest.reserve(unlabeled.size());
        std::set_difference(unlabeled.begin(), unlabeled.end(), p.begin(), p.end(), std::back_inserter(rest));
        if (rest.size() + p.size() != unlabeled.size())
            fail(Errc::SchemaViolation, "annotation batch contains frames outside the unlabeled pool");
        std::vector<FrameRef> merged;
        merged.reserve(labeled.size() + p.size());
        std::merge(labeled.begin(), labeled.end(), p.begin(), p.end(), std::back_inserter(merged));
        labeled = std::move(merged);
        unlabeled = std::move(rest);
        ++step;
    }
};

struct CurvePoint {
    int step = 0;
    double dice = 0.0;
    bool operator==(const CurvePoint&) const = default;
};

struct ALCurve {
    std::vector<CurvePoint> points;
    double full_data_dice = 1.0;
};

struct LabeledCurve {
    std::string label;
    ALCurve curve;
};

inline std::string format_fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

/// CSV with header `step,<label1>,...` and one row per step.
inline std::string curves_to_csv(std::span<const LabeledCurve> curves) {
    if (curves.empty()) fail(Errc::EmptyInput, "no curves to write");
    const auto& grid = curves.front().curve.points;
    for (const auto& c : curves) {
        const auto& pts = c.curve.points;
        if (pts.size() != grid.size() ||
            !std::equal(pts.begin(), pts.end(), grid.begin(),
                        [](const CurvePoint& a, const CurvePoint& b) { return a.step == b.step; }))
            fail(Errc::MismatchedGrids, "curve '" + c.label + "' uses a different step grid");
    }
    std::string out = "step";
    for (const auto& c : curves) out += "," + c.label;
    out += "\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out += std::to_string(grid[i].step);
        for (const auto& c : curves) out += "," + format_fixed6(c.curve.points[i].dice);
        out += "\n";
    }
    return out;
}

inline void write_curve_csv(std::span<const LabeledCurve> curves, const fs::path& path) {
    detail::spit(path, curves_to_csv(curves));
}

struct CurveTable {
    std::vector<std::string> labels;
    std::vector<int> steps;
    std::vector<std::vector<double>> values;  // values[label][step]
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline CurveTable parse_curve_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(Errc::MalformedCsv, "empty curve file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header.front() != "step") fail(Errc::MalformedCsv, "header must be step,<labels>");
    CurveTable t;
    t.labels.assign(header.begin() + 1, header.end());
    t.values.resize(t.labels.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) fail(Errc::MalformedCsv, "row width differs from header: " + line);
        try {
            std::size_t used = 0;
            t.steps.push_back(std::stoi(cells[0], &used));
            if (used != cells[0].size()) throw std::invalid_argument(cells[0]);
            for (std::size_t k = 1; k < cells.size(); ++k) {
                const double v = std::stod(cells[k], &used);
                if (used != cells[k].size() || !std::isfinite(v)) throw std::invalid_argument(cells[k]);
                t.values[k - 1].push_back(v);
            }
        } catch (const std::logic_error&) {
            fail(Errc::MalformedCsv, "non-numeric cell in row: " + line);
        }
    }
    if (t.steps.empty()) fail(Errc::MalformedCsv, "no data rows");
    return t;
}

inline CurveTable read_curve_csv(const fs::path& path) { return parse_curve_csv(detail::slurp(path)); }

} // namespace cowal

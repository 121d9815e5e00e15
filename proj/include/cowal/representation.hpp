#pragma once

// Contrastive embedding: NT-Xent loss over cosine similarities with its
// analytic gradient, and a two-layer perceptron encoder trained on jittered
// feature pairs.
//
// Batch layout: rows 2j and 2j+1 are the two views of pair j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cowal/datamodel.hpp"
#include "cowal/error.hpp"
#include "cowal/matrix.hpp"
#include "cowal/rng.hpp"

namespace cowal {

struct ContrastiveBatch {
    Matrix<double> views;  // 2N x d
    double temperature = 0.5;
};

struct LossAndGrad {
    double loss = 0.0;
    Matrix<double> grad;  // d(mean loss)/d(views)
};

namespace detail {

inline LossAndGrad ntxent(const ContrastiveBatch& b, bool want_grad) {
    const Matrix<double>& z = b.views;
    const std::size_t n2 = z.rows();
    const std::size_t d = z.cols();
    if (n2 == 0 || n2 % 2 != 0) fail(Errc::DegenerateBatch, "batch needs a positive even number of views");
    if (!(b.temperature > 0.0) || !std::isfinite(b.temperature)) fail(Errc::DegenerateBatch, "temperature must be positive");

    std::vector<double> norm(n2);
    Matrix<double> u(n2, d);
    for (std::size_t i = 0; i < n2; ++i) {
        for (double v : z.row(i))
            if (!std::isfinite(v)) fail(Errc::NonFinite, "non-finite view " + std::to_string(i));
        norm[i] = std::sqrt(squared_norm(z.row(i)));
        if (!(norm[i] > 0.0)) fail(Errc::DegenerateBatch, "zero view " + std::to_string(i));
        for (std::size_t k = 0; k < d; ++k) u(i, k) = z(i, k) / norm[i];
    }

    Matrix<double> s(n2, n2);
    for (std::size_t i = 0; i < n2; ++i)
        for (std::size_t k = i; k < n2; ++k) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += u(i, c) * u(k, c);
            s(i, k) = s(k, i) = dot / b.temperature;
        }

    // g(i,k) = d(mean loss)/d s(i,k) for anchor i.
    Matrix<double> g(n2, n2, 0.0);
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(n2);
    for (std::size_t i = 0; i < n2; ++i) {
        const std::size_t pos = i ^ 1u;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n2; ++k)
            if (k != i) m = std::max(m, s(i, k));
        double denom = 0.0;
        for (std::size_t k = 0; k < n2; ++k)
            if (k != i) denom += std::exp(s(i, k) - m);
        total += m + std::log(denom) - s(i, pos);
        if (want_grad) {
            for (std::size_t k = 0; k < n2; ++k)
                if (k != i) g(i, k) = inv * std::exp(s(i, k) - m) / denom;
            g(i, pos) -= inv;
        }
    }
    LossAndGrad out;
    out.loss = total * inv;
    if (!std::isfinite(out.loss)) fail(Errc::NonFinite, "loss is not finite");
    if (!want_grad) return out;

    out.grad = Matrix<double>(n2, d, 0.0);
    std::vector<double> du(d);
    for (std::size_t i = 0; i < n2; ++i) {
        std::fill(du.begin(), du.end(), 0.0);
        for (std::size_t k = 0; k < n2; ++k) {
            const double w = (g(i, k) + g(k, i)) / b.temperature;
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) du[c] += w * u(k, c);
        }
        // Project through the normalization Jacobian (I - u u^T) / |z|.
        double radial = 0.0;
        for (std::size_t c = 0; c < d; ++c) radial += u(i, c) * du[c];
        for (std::size_t c = 0; c < d; ++c) out.grad(i, c) = (du[c] - radial * u(i, c)) / norm[i];
    }
    return out;
}

} // namespace detail

/// Mean NT-Xent loss over all 2N anchors.
inline double ntxent_loss(const ContrastiveBatch& b) { return detail::ntxent(b, false).loss; }

inline Matrix<double> ntxent_grad(const ContrastiveBatch& b) { return detail::ntxent(b, true).grad; }

inline LossAndGrad ntxent_loss_and_grad(const ContrastiveBatch& b) { return detail::ntxent(b, true); }

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// input -> ReLU(W1 x + b1) -> W2 h + b2
struct TinyEncoder {
    std::size_t d_in = 0;
    std::size_t hidden = 0;
    std::size_t d_out = 0;
    Matrix<float> w1;  // hidden x d_in
    std::vector<float> b1;
    Matrix<float> w2;  // d_out x hidden
    std::vector<float> b2;

    static TinyEncoder zeros(std::size_t d_in, std::size_t hidden, std::size_t d_out) {
        TinyEncoder e;
        e.d_in = d_in;
        e.hidden = hidden;
        e.d_out = d_out;
        e.w1 = Matrix<float>(hidden, d_in, 0.0f);
        e.b1.assign(hidden, 0.0f);
        e.w2 = Matrix<float>(d_out, hidden, 0.0f);
        e.b2.assign(d_out, 0.0f);
        return e;
    }

    /// He-uniform weights, zero biases.
    static TinyEncoder random(std::size_t d_in, std::size_t hidden, std::size_t d_out, std::uint64_t seed) {
        TinyEncoder e = zeros(d_in, hidden, d_out);
        Rng rng(seed);
        const double a1 = std::sqrt(6.0 / static_cast<double>(d_in));
        for (float& w : e.w1.data()) w = static_cast<float>(rng.uniform(-a1, a1));
        const double a2 = std::sqrt(6.0 / static_cast<double>(hidden));
        for (float& w : e.w2.data()) w = static_cast<float>(rng.uniform(-a2, a2));
        return e;
    }

    std::size_t parameter_count() const { return w1.data().size() + b1.size() + w2.data().size() + b2.size(); }

    /// Parameters in declaration order (w1, b1, w2, b2).
    std::vector<float*> parameters() {
        std::vector<float*> p;
        p.reserve(parameter_count());
        for (float& v : w1.data()) p.push_back(&v);
        for (float& v : b1) p.push_back(&v);
        for (float& v : w2.data()) p.push_back(&v);
        for (float& v : b2) p.push_back(&v);
        return p;
    }

    bool operator==(const TinyEncoder&) const = default;
};

namespace detail {

struct Activations {
    std::vector<double> pre;  // hidden pre-activation
    std::vector<double> out;
};

template <typename Range>
Activations forward(const TinyEncoder& e, const Range& x) {
    Activations a;
    a.pre.assign(e.hidden, 0.0);
    a.out.assign(e.d_out, 0.0);
    for (std::size_t h = 0; h < e.hidden; ++h) {
        double s = e.b1[h];
        const auto w = e.w1.row(h);
        std::size_t k = 0;
        for (auto v : x) s += static_cast<double>(w[k++]) * static_cast<double>(v);
        a.pre[h] = s;
    }
    for (std::size_t o = 0; o < e.d_out; ++o) {
        double s = e.b2[o];
        const auto w = e.w2.row(o);
        for (std::size_t h = 0; h < e.hidden; ++h) s += static_cast<double>(w[h]) * std::max(0.0, a.pre[h]);
        a.out[o] = s;
    }
    return a;
}

} // namespace detail

/// Forward pass with L2-normalized output rows.
inline EmbeddingMatrix encode(const TinyEncoder& e, const Matrix<float>& features) {
    if (features.cols() != e.d_in)
        fail(Errc::ShapeMismatch, "features have " + std::to_string(features.cols()) + " columns, encoder expects " +
                                      std::to_string(e.d_in));
    EmbeddingMatrix out(features.rows(), e.d_out);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (float v : features.row(i))
            if (!std::isfinite(v)) fail(Errc::NonFiniteValue, "feature row " + std::to_string(i));
        const auto a = detail::forward(e, features.row(i));
        double n = 0.0;
        for (double v : a.out) n += v * v;
        n = std::sqrt(n);
        if (!(n > 0.0)) fail(Errc::ZeroNormRow, "encoder output row " + std::to_string(i));
        for (std::size_t o = 0; o < e.d_out; ++o) out(i, o) = static_cast<float>(a.out[o] / n);
    }
    return out;
}

struct TrainOptions {
    std::size_t hidden = 64;
    std::size_t d_out = 16;
    int epochs = 200;
    double lr = 3e-4;
    std::size_t batch_pairs = 256;
    double temperature = 0.5;
    double jitter = 0.1;  // stddev of the additive Gaussian view augmentation
    std::uint64_t seed = 0;
};

struct TrainResult {
    TinyEncoder encoder;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Adam on the NT-Xent loss; each pair is two jittered copies of one feature row.
inline TrainResult train_encoder(const Matrix<float>& features, const TrainOptions& opt) {
    const std::size_t n = features.rows();
    const std::size_t d_in = features.cols();
    if (d_in == 0) fail(Errc::ShapeMismatch, "features have no columns");
    if (opt.batch_pairs < 1 || n < opt.batch_pairs)
        fail(Errc::BadParams, "need at least batch_pairs=" + std::to_string(opt.batch_pairs) + " rows, have " +
                                  std::to_string(n));
    if (opt.epochs < 0 || opt.lr < 0.0 || opt.temperature <= 0.0 || opt.jitter < 0.0)
        fail(Errc::BadParams, "invalid training hyperparameters");

    TrainResult res;
    res.encoder = TinyEncoder::random(d_in, opt.hidden, opt.d_out, derive_seed(opt.seed, 1));
    TinyEncoder& e = res.encoder;
    auto params = e.parameters();
    std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0), grad(params.size());
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;

    Rng rng(derive_seed(opt.seed, 2));
    std::vector<std::size_t> order(n);
    std::vector<double> view(d_in);
    const std::size_t w1n = e.w1.data().size(), b1n = e.b1.size(), w2n = e.w2.data().size();

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

        double epoch_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < n; start += opt.batch_pairs) {
            const std::size_t N = std::min(opt.batch_pairs, n - start);
            if (N < 2 && start > 0) continue;  // a lone pair has no negatives
            std::vector<std::vector<double>> inputs(2 * N);
            std::vector<detail::Activations> acts(2 * N);
            ContrastiveBatch batch{Matrix<double>(2 * N, e.d_out), opt.temperature};
            for (std::size_t p = 0; p < N; ++p) {
                const auto src = features.row(order[start + p]);
                for (int v = 0; v < 2; ++v) {
                    for (std::size_t k = 0; k < d_in; ++k) view[k] = static_cast<double>(src[k]) + opt.jitter * rng.normal();
                    const std::size_t r = 2 * p + static_cast<std::size_t>(v);
                    inputs[r] = view;
                    acts[r] = detail::forward(e, view);
                    std::copy(acts[r].out.begin(), acts[r].out.end(), batch.views.row(r).begin());
                }
            }
            const LossAndGrad lg = ntxent_loss_and_grad(batch);
            epoch_sum += lg.loss;
            ++batches;

            std::fill(grad.begin(), grad.end(), 0.0);
            std::vector<double> dh(e.hidden);
            for (std::size_t r = 0; r < 2 * N; ++r) {
                const auto dout = lg.grad.row(r);
                std::fill(dh.begin(), dh.end(), 0.0);
                for (std::size_t o = 0; o < e.d_out; ++o) {
                    grad[w1n + b1n + w2n + o] += dout[o];
                    for (std::size_t h = 0; h < e.hidden; ++h) {
                        const double act = std::max(0.0, acts[r].pre[h]);
                        grad[w1n + b1n + o * e.hidden + h] += dout[o] * act;
                        dh[h] += dout[o] * static_cast<double>(e.w2(o, h));
                    }
                }
                for (std::size_t h = 0; h < e.hidden; ++h) {
                    if (acts[r].pre[h] <= 0.0) continue;
                    grad[w1n + h] += dh[h];
                    for (std::size_t k = 0; k < d_in; ++k) grad[h * d_in + k] += dh[h] * inputs[r][k];
                }
            }

            ++t;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
            for (std::size_t k = 0; k < params.size(); ++k) {
                if (!std::isfinite(grad[k])) fail(Errc::NonFinite, "gradient diverged at epoch " + std::to_string(epoch));
                m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                const double step = opt.lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
                *params[k] = static_cast<float>(static_cast<double>(*params[k]) - step);
            }
        }
        res.epoch_loss.push_back(epoch_sum / std::max(1, batches));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint: "COWENC1" u32 d_in u32 hidden u32 d_out, then f32 parameters
// in declaration order.
// ---------------------------------------------------------------------------

inline std::string encode_encoder(const TinyEncoder& e) {
    std::string out = "COWENC1";
    detail::put_u32(out, static_cast<std::uint32_t>(e.d_in));
    detail::put_u32(out, static_cast<std::uint32_t>(e.hidden));
    detail::put_u32(out, static_cast<std::uint32_t>(e.d_out));
    auto copy = e;
    for (float* p : copy.parameters()) detail::put_f32(out, *p);
    return out;
}

inline TinyEncoder decode_encoder(std::string bytes, std::string name = "encoder") {
    detail::ByteReader in(std::move(bytes), name);
    in.expect_magic("COWENC1");
    const std::size_t d_in = in.u32(), hidden = in.u32(), d_out = in.u32();
    TinyEncoder e = TinyEncoder::zeros(d_in, hidden, d_out);
    in.need(e.parameter_count() * 4);
    for (float* p : e.parameters()) {
        *p = in.f32();
        if (!std::isfinite(*p)) fail(Errc::NonFiniteValue, name + ": non-finite parameter");
    }
    return e;
}

inline void write_encoder(const TinyEncoder& e, const fs::path& path) { detail::spit(path, encode_encoder(e)); }

inline TinyEncoder read_encoder(const fs::path& path) { return decode_encoder(detail::slurp(path), path.string()); }

} // namespace cowal

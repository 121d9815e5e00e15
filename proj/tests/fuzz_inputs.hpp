#pragma once

#include <numeric>

#include "cowal/strategies.hpp"

namespace fuzz {

using namespace cowal;

// Random multi-video pool for fuzzing.
struct World {
    FrameLayout layout;
    EmbeddingMatrix emb;
    ALState state;
    std::vector<double> entropy;
};

inline World random_world(Rng& rng, std::size_t& Q) {
    World w;
    const std::size_t V = 1 + rng.index(5), d = 2 + rng.index(7);
    std::vector<std::size_t> counts(V);
    for (auto& c : counts) c = 1 + rng.index(15);
    w.layout = FrameLayout(counts);
    const std::size_t n = w.layout.total();
    w.emb = EmbeddingMatrix(n, d);
    for (auto& v : w.emb.data()) v = static_cast<float>(rng.normal());
    // a few near-duplicates, as consecutive video frames would be
    for (std::size_t i = 1; i < n; ++i)
        if (rng.uniform() < 0.3)
            for (std::size_t k = 0; k < d; ++k) w.emb(i, k) = w.emb(i - 1, k) + static_cast<float>(rng.normal(0, 0.01));
    normalize_rows(w.emb);
    w.entropy.resize(n);
    for (auto& h : w.entropy) h = rng.uniform(0.0, 50.0);
    const std::size_t A = rng.index(n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < A; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
    std::vector<bool> lab(n, false);
    for (std::size_t i = 0; i < A; ++i) lab[idx[i]] = true;
    for (std::size_t g = 0; g < n; ++g) (lab[g] ? w.state.labeled : w.state.unlabeled).push_back(w.layout.ref(g));
    Q = 1 + rng.index(w.state.unlabeled.size());
    return w;
}

} // namespace fuzz

#pragma once

// Reference implementations used only by tests. They share no code with the
// library and favour the plainest possible formulation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Points = std::vector<Vec>;

inline double dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// argsort with ties to the lower index
inline std::vector<std::size_t> argsort(const Vec& v) {
    std::vector<std::pair<double, std::size_t>> tmp;
    for (std::size_t i = 0; i < v.size(); ++i) tmp.emplace_back(v[i], i);
    std::sort(tmp.begin(), tmp.end());
    std::vector<std::size_t> out;
    for (const auto& [_, i] : tmp) out.push_back(i);
    return out;
}

struct MatchResult {
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // visiting order
    std::vector<std::size_t> leftover;                          // ascending
};

// Centroid matching as the plainest greedy loop: visit labeled points by
// their closest-centroid distance, give each its nearest free centroid.
inline MatchResult centroid_matching(const Points& a, const Points& k) {
    std::vector<Vec> d(a.size(), Vec(k.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < k.size(); ++j) d[i][j] = dist(a[i], k[j]);
    Vec closest;
    for (const auto& row : d) closest.push_back(*std::min_element(row.begin(), row.end()));
    const auto visit_order = argsort(closest);
    MatchResult M;
    std::set<std::size_t> assigned;
    for (std::size_t ip : visit_order) {
        for (std::size_t jp : argsort(d[ip])) {
            if (!assigned.count(jp)) {
                assigned.insert(jp);
                M.matches.emplace_back(ip, jp);
                break;
            }
        }
    }
    for (std::size_t j = 0; j < k.size(); ++j)
        if (!assigned.count(j)) M.leftover.push_back(j);
    return M;
}

// Global optimum of the k-means objective with `fixed` centroids held in
// place and `free` extra clusters, by enumerating every assignment.
inline double best_partition_inertia(const Points& pts, const Points& fixed, std::size_t free) {
    const std::size_t n = pts.size(), K = fixed.size() + free, d = pts.empty() ? 0 : pts[0].size();
    std::vector<std::size_t> label(n, 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        double cost = 0.0;
        for (std::size_t c = 0; c < K; ++c) {
            if (c < fixed.size()) {
                for (std::size_t i = 0; i < n; ++i)
                    if (label[i] == c) cost += std::pow(dist(pts[i], fixed[c]), 2);
                continue;
            }
            Vec mean(d, 0.0);
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (label[i] == c) {
                    ++cnt;
                    for (std::size_t t = 0; t < d; ++t) mean[t] += pts[i][t];
                }
            if (!cnt) continue;
            for (auto& m : mean) m /= static_cast<double>(cnt);
            for (std::size_t i = 0; i < n; ++i)
                if (label[i] == c) cost += std::pow(dist(pts[i], mean), 2);
        }
        best = std::min(best, cost);
        std::size_t pos = 0;
        while (pos < n && ++label[pos] == K) label[pos++] = 0;
        if (pos == n) break;
    }
    return best;
}

inline double mean(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double median(Vec v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// One-sided sign test: P(X >= wins) for X ~ Bin(wins + losses, 1/2).
inline double sign_test_p(int wins, int losses) {
    const int n = wins + losses;
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(lc - n * std::log(2.0));
    }
    return p;
}

// NT-Xent from the definition: mean over the 2N anchors of
// -log(exp(s_ij) / sum_{k != i} exp(s_ik)), s = cosine / tau, partner j = i ^ 1.
inline double ntxent(const Points& z, double tau) {
    auto cos = [&](std::size_t a, std::size_t b) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < z[a].size(); ++k) {
            dot += z[a][k] * z[b][k];
            na += z[a][k] * z[a][k];
            nb += z[b][k] * z[b][k];
        }
        return dot / std::sqrt(na * nb);
    };
    double total = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        double denom = 0;
        for (std::size_t k = 0; k < z.size(); ++k)
            if (k != i) denom += std::exp(cos(i, k) / tau);
        total += -std::log(std::exp(cos(i, i ^ 1) / tau) / denom);
    }
    return total / static_cast<double>(z.size());
}

inline Points ntxent_central_differences(Points z, double tau, double eps = 1e-4) {
    Points g(z.size(), Vec(z.empty() ? 0 : z[0].size()));
    for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t k = 0; k < z[i].size(); ++k) {
            const double keep = z[i][k];
            z[i][k] = keep + eps;
            const double up = ntxent(z, tau);
            z[i][k] = keep - eps;
            const double down = ntxent(z, tau);
            z[i][k] = keep;
            g[i][k] = (up - down) / (2 * eps);
        }
    return g;
}

// Trapezoid area over (x, y) pairs.
inline double trapezoid(const std::vector<std::pair<double, double>>& pts) {
    double s = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        s += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
    return s;
}

} // namespace oracle

#pragma once

// Exhaustive greedy agglomeration, recomputed from members at every step.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "driftgce/glance.hpp"
#include "driftgce/rng.hpp"

namespace oracle {

using driftgce::Matrix;
using driftgce::Vector;

struct Cluster {
    std::vector<std::size_t> members;
    Vector centroid;
    Vector cfav;
};

inline Vector member_mean(const Matrix& m, const std::vector<std::size_t>& members) {
    Vector out(m.cols(), 0.0);
    for (std::size_t r : members) {
        for (std::size_t k = 0; k < m.cols(); ++k) out[k] += m(r, k);
    }
    for (double& v : out) v /= static_cast<double>(members.size());
    return out;
}

inline double plain_distance(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

inline double plain_cosine(const Vector& a, const Vector& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// Clusters come back ordered by smallest member.
inline std::vector<Cluster> agglomerate(const Matrix& points, const Matrix& cfavs,
                                        std::size_t k) {
    std::vector<std::vector<std::size_t>> parts;
    for (std::size_t i = 0; i < points.rows(); ++i) parts.push_back({i});
    while (parts.size() > k) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t ba = 0, bb = 0;
        for (std::size_t a = 0; a < parts.size(); ++a) {
            for (std::size_t b = a + 1; b < parts.size(); ++b) {
                const double d =
                    plain_distance(member_mean(points, parts[a]), member_mean(points, parts[b])) +
                    1.0 - plain_cosine(member_mean(cfavs, parts[a]), member_mean(cfavs, parts[b]));
                if (d < best) {
                    best = d;
                    ba = a;
                    bb = b;
                }
            }
        }
        parts[ba].insert(parts[ba].end(), parts[bb].begin(), parts[bb].end());
        std::sort(parts[ba].begin(), parts[ba].end());
        parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(bb));
        std::sort(parts.begin(), parts.end(),
                  [](const auto& x, const auto& y) { return x.front() < y.front(); });
    }
    std::vector<Cluster> out;
    for (const auto& p : parts) out.push_back({p, member_mean(points, p), member_mean(cfavs, p)});
    return out;
}

struct Instance {
    Matrix points;
    Matrix cfavs;
    std::size_t k = 1;
};

inline Instance random_instance(driftgce::Rng& rng, std::size_t max_n = 8) {
    const std::size_t n = 1 + rng.index(max_n);
    const std::size_t d = 1 + rng.index(3);
    Instance inst{Matrix(n, d), Matrix(n, d), 1 + rng.index(n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < d; ++t) {
            inst.points(i, t) = rng.uniform();
            inst.cfavs(i, t) = rng.uniform() * 2.0 - 1.0;
        }
    }
    return inst;
}

// True when glance reproduces the oracle's partition and values within tol.
inline bool matches(const std::vector<driftgce::GlanceCluster>& got,
                    const std::vector<Cluster>& want, double tol) {
    if (got.size() != want.size()) return false;
    auto sorted = got;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.members.front() < b.members.front();
    });
    for (std::size_t c = 0; c < want.size(); ++c) {
        if (sorted[c].members != want[c].members) return false;
        if (sorted[c].weight != want[c].members.size()) return false;
        for (std::size_t t = 0; t < want[c].centroid.size(); ++t) {
            if (std::abs(sorted[c].centroid[t] - want[c].centroid[t]) > tol) return false;
            if (std::abs(sorted[c].cfav[t] - want[c].cfav[t]) > tol) return false;
        }
    }
    return true;
}

}  // namespace oracle

#include "driftgce/xmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace driftgce {

namespace {

std::size_t nearest_center(const Matrix& centers, std::span<const double> x, double* best_d2) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.rows(); ++c) {
        const double d2 = squared_distance(centers.row(c), x);
        if (d2 < bd) {
            bd = d2;
            best = c;
        }
    }
    if (best_d2) *best_d2 = bd;
    return best;
}

Matrix kmeanspp_seed(const Matrix& points, std::size_t k, Rng& rng) {
    Matrix centers(0, points.cols());
    centers.append_row(points.row(rng.index(points.rows())));
    std::vector<double> d2(points.rows());
    while (centers.rows() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            nearest_center(centers, points.row(i), &d2[i]);
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.index(points.rows());
        } else {
            double u = rng.uniform() * total;
            for (pick = 0; pick + 1 < points.rows(); ++pick) {
                u -= d2[pick];
                if (u < 0.0) break;
            }
        }
        centers.append_row(points.row(pick));
    }
    return centers;
}

// Region BIC after also splitting both children once. A split of two
// symmetric modes into halves that are still bimodal scores no better than
// the parent on its own, so the first step is judged by the second.
double lookahead_bic(const Matrix& region, const KMeansResult& split, Rng& rng);

}  // namespace

KMeansResult lloyd(const Matrix& points, Matrix centers, std::size_t max_iterations) {
    const std::size_t n = points.rows();
    const std::size_t k = centers.rows();
    const std::size_t d = points.cols();
    KMeansResult r;
    r.assignment.assign(n, 0);
    std::vector<double> d2(n);
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = iter == 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest_center(centers, points.row(i), &d2[i]);
            if (c != r.assignment[i]) {
                r.assignment[i] = c;
                changed = true;
            }
        }
        Matrix next(k, d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = points.row(i);
            for (std::size_t j = 0; j < d; ++j) next(r.assignment[i], j) += row[j];
            ++counts[r.assignment[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // farthest point becomes the new center
                const auto far = static_cast<std::size_t>(
                    std::max_element(d2.begin(), d2.end()) - d2.begin());
                auto row = points.row(far);
                std::copy(row.begin(), row.end(), next.row(c).begin());
                d2[far] = 0.0;
                changed = true;
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) next(c, j) /= static_cast<double>(counts[c]);
        }
        centers = std::move(next);
        if (!changed) break;
    }
    r.sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r.assignment[i] = nearest_center(centers, points.row(i), &d2[i]);
        r.sse += d2[i];
    }
    r.centers = std::move(centers);
    return r;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, std::size_t restarts,
                    std::size_t max_iterations) {
    if (k == 0 || k > points.rows()) throw std::invalid_argument("kmeans: need 1 <= k <= n");
    KMeansResult best;
    best.sse = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
        auto result = lloyd(points, kmeanspp_seed(points, k, rng), max_iterations);
        if (result.sse < best.sse) best = std::move(result);
    }
    return best;
}

double spherical_bic(const Matrix& points, const std::vector<std::size_t>& assignment,
                     std::size_t k, double sse) {
    const double R = static_cast<double>(points.rows());
    const double d = static_cast<double>(points.cols());
    const double K = static_cast<double>(k);
    if (points.rows() <= k) return -std::numeric_limits<double>::infinity();
    // floor keeps exact-duplicate clusters finite
    const double variance = std::max(sse / (d * (R - K)), 1e-300);
    std::vector<double> counts(k, 0.0);
    for (std::size_t a : assignment) counts[a] += 1.0;
    double loglik = -0.5 * R * d * std::log(2.0 * std::numbers::pi * variance) - 0.5 * d * (R - K);
    for (double rn : counts) {
        if (rn > 0.0) loglik += rn * std::log(rn / R);
    }
    const double params = K * (d + 1.0);
    return loglik - 0.5 * params * std::log(R);
}

std::size_t estimate_k(const Matrix& points, std::size_t k_max, std::uint64_t seed) {
    if (points.rows() < 2) throw std::invalid_argument("estimate_k: need at least 2 points");
    if (k_max == 0) throw std::invalid_argument("estimate_k: k_max must be >= 1");
    bool identical = true;
    for (std::size_t i = 1; i < points.rows() && identical; ++i) {
        identical = squared_distance(points.row(i), points.row(0)) == 0.0;
    }
    if (identical || k_max == 1) return 1;

    Rng rng(seed);
    Matrix centers(0, points.cols());
    centers.append_row(column_means(points));

    while (centers.rows() < k_max) {
        auto global = lloyd(points, centers);
        centers = global.centers;

        struct Candidate {
            std::size_t parent;
            double gain;
            Matrix children;
        };
        std::vector<Candidate> accepted;
        for (std::size_t c = 0; c < centers.rows(); ++c) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < points.rows(); ++i) {
                if (global.assignment[i] == c) idx.push_back(i);
            }
            if (idx.size() < 4) continue;
            const Matrix region = points.select_rows(idx);
            const Vector center = centers.row_vector(c);
            double parent_sse = 0.0;
            for (std::size_t i = 0; i < region.rows(); ++i) {
                parent_sse += squared_distance(region.row(i), center);
            }
            if (parent_sse == 0.0) continue;
            const std::vector<std::size_t> single(region.rows(), 0);
            const double parent_bic = spherical_bic(region, single, 1, parent_sse);
            auto split = kmeans(region, 2, rng, 3);
            double child_bic = spherical_bic(region, split.assignment, 2, split.sse);
            if (!(child_bic > parent_bic) && centers.rows() + 2 <= k_max) {
                child_bic = std::max(child_bic, lookahead_bic(region, split, rng));
            }
            if (child_bic > parent_bic) {
                accepted.push_back({c, child_bic - parent_bic, split.centers});
            }
        }
        if (accepted.empty()) break;
        // Largest BIC gains first when the cap would be exceeded.
        std::stable_sort(accepted.begin(), accepted.end(),
                         [](const Candidate& a, const Candidate& b) { return a.gain > b.gain; });
        const std::size_t room = k_max - centers.rows();
        if (accepted.size() > room) accepted.resize(room);
        std::vector<bool> split_parent(centers.rows(), false);
        Matrix next(0, points.cols());
        for (const auto& a : accepted) split_parent[a.parent] = true;
        for (std::size_t c = 0; c < centers.rows(); ++c) {
            if (!split_parent[c]) next.append_row(centers.row(c));
        }
        for (const auto& a : accepted) {
            next.append_row(a.children.row(0));
            next.append_row(a.children.row(1));
        }
        centers = std::move(next);
    }
    return std::min(centers.rows(), k_max);
}

namespace {

double lookahead_bic(const Matrix& region, const KMeansResult& split, Rng& rng) {
    Matrix centers(0, region.cols());
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < region.rows(); ++i) {
            if (split.assignment[i] == c) idx.push_back(i);
        }
        if (idx.size() < 4) {
            centers.append_row(split.centers.row(c));
            continue;
        }
        const auto sub = kmeans(region.select_rows(idx), 2, rng, 3);
        centers.append_row(sub.centers.row(0));
        centers.append_row(sub.centers.row(1));
    }
    const auto refined = lloyd(region, centers);
    return spherical_bic(region, refined.assignment, refined.centers.rows(), refined.sse);
}

}  // namespace

}  // namespace driftgce

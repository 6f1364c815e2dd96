#pragma once

#include <cstdint>
#include <vector>

#include "driftgce/linalg.hpp"
#include "driftgce/rng.hpp"

namespace driftgce {

struct KMeansResult {
    Matrix centers;
    std::vector<std::size_t> assignment;
    double sse = 0.0;
};

/// Lloyd iterations from the given initial centers. Empty clusters are
/// re-seeded at the point farthest from its center.
KMeansResult lloyd(const Matrix& points, Matrix centers, std::size_t max_iterations = 100);

/// k-means++ seeding + Lloyd, best of `restarts` by SSE.
KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, std::size_t restarts = 3,
                    std::size_t max_iterations = 100);

/// BIC of a hard clustering under identical spherical Gaussians:
///   sigma^2 = SSE / (d (R - K))
///   logL    = sum_n R_n ln(R_n / R) - R d/2 ln(2 pi sigma^2) - d (R - K) / 2
///   BIC     = logL - K (d + 1) / 2 ln R
/// Returns -infinity when R <= K.
double spherical_bic(const Matrix& points, const std::vector<std::size_t>& assignment,
                     std::size_t k, double sse);

/// X-means: start from one center, split each region with 2-means while the
/// local BIC improves, refine globally, stop when no split is accepted or
/// k_max is reached. All-identical points give 1.
std::size_t estimate_k(const Matrix& points, std::size_t k_max, std::uint64_t seed);

}  // namespace driftgce

#include "driftgce/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <thread>

#include "driftgce/io.hpp"

namespace driftgce {

std::string to_string(CeMethod m) { return m == CeMethod::face ? "face" : "wachter"; }

CeMethod ce_method_from_string(const std::string& s) {
    if (s == "face") return CeMethod::face;
    if (s == "wachter") return CeMethod::wachter;
    throw std::invalid_argument("unknown counterfactual method: " + s);
}

// ---- Wachter ---------------------------------------------------------------

CounterfactualResult wachter_ce(const Classifier& model, std::span<const double> x,
                                const WachterOptions& options) {
    require_same_dim(model.dim(), x.size(), "wachter_ce");
    if (!(options.lambda > 0.0)) throw std::invalid_argument("wachter_ce: lambda must be > 0");
    if (!(options.step_size > 0.0)) {
        throw std::invalid_argument("wachter_ce: step size must be > 0");
    }
    const int current = model.predict(x);
    const int target_class = options.target_class.value_or(1 - current);
    if (target_class == current) {
        throw std::invalid_argument("wachter_ce: input is already classified as the target");
    }
    const double target = static_cast<double>(target_class);

    const std::size_t d = x.size();
    Vector c(d, 0.0);
    Vector probe(x.begin(), x.end());
    CounterfactualResult result;
    result.origin.assign(x.begin(), x.end());
    result.method = CeMethod::wachter;

    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        const double p = model.predict_proba(probe);
        const Vector gp = model.input_gradient(probe);
        const double loss = (p - target) * (p - target) + options.lambda * dot(c, c);
        if (!std::isfinite(loss)) {
            throw OptimizationError("wachter_ce: non-finite loss", c);
        }
        Vector next = c;
        for (std::size_t k = 0; k < d; ++k) {
            const double g = 2.0 * (p - target) * gp[k] + 2.0 * options.lambda * c[k];
            next[k] -= options.step_size * g;
        }
        for (double v : next) {
            if (!std::isfinite(v)) throw OptimizationError("wachter_ce: iterate diverged", c);
        }
        c = std::move(next);
        for (std::size_t k = 0; k < d; ++k) probe[k] = x[k] + c[k];
        if (model.predict(probe) != current) {
            result.valid = true;
            break;
        }
    }
    result.action = c;
    result.counterfactual = probe;
    result.cost = norm(c);
    return result;
}

// ---- FACE graph ------------------------------------------------------------

std::size_t FaceGraph::edge_count() const {
    std::size_t total = 0;
    for (const auto& a : adjacency) total += a.size();
    return total / 2;
}

std::optional<double> FaceGraph::weight(std::size_t i, std::size_t j) const {
    for (const auto& e : adjacency.at(i)) {
        if (e.to == j) return e.weight;
    }
    return std::nullopt;
}

double kde_log_density(const Matrix& points, std::span<const double> at, double bandwidth) {
    const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        terms[i] = -squared_distance(points.row(i), at) * inv2h2;
        max_term = std::max(max_term, terms[i]);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - max_term);
    const double d = static_cast<double>(points.cols());
    return max_term + std::log(s) - std::log(static_cast<double>(points.rows())) -
           0.5 * d * std::log(2.0 * std::numbers::pi * bandwidth * bandwidth);
}

namespace {

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

FaceGraph build_face_graph(const SampleWindow& window, const FaceOptions& options) {
    window.validate();
    const std::size_t n = window.size();
    if (n < 2) throw std::invalid_argument("build_face_graph: need at least 2 points");
    if (options.k_neighbors == 0 || options.k_neighbors >= n) {
        throw std::invalid_argument("build_face_graph: k_neighbors must be in [1, n)");
    }
    if (!(options.bandwidth > 0.0)) {
        throw std::invalid_argument("build_face_graph: bandwidth must be > 0");
    }
    if (!(options.target_density_quantile >= 0.0 && options.target_density_quantile <= 1.0)) {
        throw std::invalid_argument("build_face_graph: target_density_quantile must be in [0, 1]");
    }
    const Matrix& x = window.features;

    FaceGraph graph;
    graph.k_neighbors = options.k_neighbors;
    graph.bandwidth = options.bandwidth;
    graph.density_floor = options.density_floor;
    graph.target_density_quantile = options.target_density_quantile;
    graph.adjacency.resize(n);
    graph.log_density.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        graph.log_density[i] = kde_log_density(x, x.row(i), options.bandwidth);
    }

    auto edge_weight = [&](std::size_t i, std::size_t j, double length) {
        Vector mid(x.cols());
        for (std::size_t k = 0; k < x.cols(); ++k) mid[k] = 0.5 * (x(i, k) + x(j, k));
        const double neg_log = -kde_log_density(x, mid, options.bandwidth);
        return length * std::max(neg_log, options.density_floor);
    };
    std::vector<std::vector<std::size_t>> neighbor_sets(n);
    auto add_edge = [&](std::size_t i, std::size_t j, double length) {
        if (std::find(neighbor_sets[i].begin(), neighbor_sets[i].end(), j) !=
            neighbor_sets[i].end()) {
            return false;
        }
        const double w = edge_weight(i, j, length);
        graph.adjacency[i].push_back({j, length, w});
        graph.adjacency[j].push_back({i, length, w});
        neighbor_sets[i].push_back(j);
        neighbor_sets[j].push_back(i);
        return true;
    };

    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t i = 0; i < n; ++i) {
        candidates.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            candidates.emplace_back(distance(x.row(i), x.row(j)), j);
        }
        const std::size_t k = options.k_neighbors;
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                          candidates.end());
        for (std::size_t t = 0; t < k; ++t) {
            const auto [len, j] = candidates[t];
            if (len == 0.0) {
                ++graph.rejected_zero_length;
                continue;
            }
            add_edge(i, j, len);
        }
    }

    DisjointSet ds(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& e : graph.adjacency[i]) ds.unite(i, e.to);
    }
    std::vector<std::vector<std::size_t>> components;
    {
        std::vector<std::size_t> slot(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t root = ds.find(i);
            if (slot[root] == n) {
                slot[root] = components.size();
                components.emplace_back();
            }
            components[slot[root]].push_back(i);
        }
    }
    graph.knn_components = components.size();

    if (options.bridge_components && components.size() > 1) {
        for (std::size_t a = 0; a < components.size(); ++a) {
            for (std::size_t b = a + 1; b < components.size(); ++b) {
                double best = std::numeric_limits<double>::infinity();
                std::size_t bi = 0, bj = 0;
                for (std::size_t i : components[a]) {
                    for (std::size_t j : components[b]) {
                        const double len = distance(x.row(i), x.row(j));
                        if (len > 0.0 && len < best) {
                            best = len;
                            bi = i;
                            bj = j;
                        }
                    }
                }
                if (std::isfinite(best) && add_edge(bi, bj, best)) ++graph.bridge_edges;
            }
        }
    }
    if (graph.edge_count() == 0) {
        throw std::invalid_argument(
            "build_face_graph: degenerate window (all points identical, no usable edges)");
    }
    return graph;
}

// ---- FACE search -------------------------------------------------------------

CounterfactualResult face_ce(const Classifier& model, const FaceGraph& graph,
                             const SampleWindow& window, std::size_t row,
                             std::span<const int> predictions) {
    if (graph.size() != window.size()) {
        throw std::invalid_argument("face_ce: graph does not belong to this window");
    }
    if (row >= window.size()) throw std::out_of_range("face_ce: row out of range");
    require_same_dim(model.dim(), window.dim(), "face_ce");
    auto predicted = [&](std::size_t i) {
        return predictions.empty() ? model.predict(window.features.row(i)) : predictions[i];
    };
    const int origin_class = predicted(row);
    const std::size_t n = graph.size();

    double min_log_density = -std::numeric_limits<double>::infinity();
    if (graph.target_density_quantile > 0.0 && graph.log_density.size() == n) {
        std::vector<double> pool;
        for (std::size_t i = 0; i < n; ++i) {
            if (predicted(i) != origin_class) pool.push_back(graph.log_density[i]);
        }
        if (!pool.empty()) {
            const auto at = static_cast<std::size_t>(
                std::floor(graph.target_density_quantile * static_cast<double>(pool.size() - 1)));
            std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(at),
                             pool.end());
            min_log_density = pool[at];
        }
    }
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[row] = 0.0;
    heap.emplace(0.0, row);
    std::optional<std::size_t> endpoint;
    while (!heap.empty()) {
        const auto [du, u] = heap.top();
        heap.pop();
        if (du > dist[u]) continue;
        if (u != row && predicted(u) != origin_class &&
            (graph.log_density.size() != n || graph.log_density[u] >= min_log_density)) {
            endpoint = u;
            break;
        }
        for (const auto& e : graph.adjacency[u]) {
            const double nd = du + e.weight;
            if (nd < dist[e.to]) {
                dist[e.to] = nd;
                heap.emplace(nd, e.to);
            }
        }
    }
    if (!endpoint) {
        throw NoCounterfactualError("face_ce: no opposite-class node reachable from row " +
                                    std::to_string(row));
    }
    CounterfactualResult result;
    result.method = CeMethod::face;
    result.origin = window.features.row_vector(row);
    result.action = subtract(window.features.row(*endpoint), window.features.row(row));
    result.counterfactual = window.features.row_vector(*endpoint);
    result.cost = norm(result.action);
    result.endpoint_index = endpoint;
    result.valid = true;
    return result;
}

CounterfactualResult face_ce(const Classifier& model, const FaceGraph& graph,
                             const SampleWindow& window, std::span<const double> x) {
    require_same_dim(window.dim(), x.size(), "face_ce");
    for (std::size_t i = 0; i < window.size(); ++i) {
        auto r = window.features.row(i);
        if (std::equal(r.begin(), r.end(), x.begin())) return face_ce(model, graph, window, i);
    }
    throw std::invalid_argument("face_ce: x is not a row of the window");
}

// ---- batch -------------------------------------------------------------------

std::vector<CounterfactualResult> batch_ces(const Classifier& model, const SampleWindow& window,
                                            const BatchOptions& options,
                                            std::span<const std::size_t> rows) {
    std::optional<FaceGraph> graph;
    if (options.method == CeMethod::face) graph = build_face_graph(window, options.face);
    return batch_ces(model, window, options, graph ? &*graph : nullptr, rows);
}

std::vector<CounterfactualResult> batch_ces(const Classifier& model, const SampleWindow& window,
                                            const BatchOptions& options,
                                            const FaceGraph* graph,
                                            std::span<const std::size_t> rows) {
    window.validate();
    std::vector<std::size_t> all;
    if (rows.empty()) {
        all.resize(window.size());
        std::iota(all.begin(), all.end(), 0);
        rows = all;
    }
    if (options.method == CeMethod::face && graph == nullptr) {
        throw std::invalid_argument("batch_ces: FACE needs a graph");
    }
    std::vector<int> predictions;
    if (options.method == CeMethod::face) {
        predictions.resize(window.size());
        for (std::size_t i = 0; i < window.size(); ++i) {
            predictions[i] = model.predict(window.features.row(i));
        }
    }

    auto solve_wachter = [&](std::size_t row) {
        try {
            return wachter_ce(model, window.features.row(row), options.wachter);
        } catch (const OptimizationError& e) {
            CounterfactualResult r;
            r.origin = window.features.row_vector(row);
            r.action = e.last_iterate();
            r.counterfactual = add(r.origin, r.action);
            r.cost = norm(r.action);
            r.method = CeMethod::wachter;
            r.failure = e.what();
            return r;
        }
    };
    auto solve = [&](std::size_t row) {
        if (options.method == CeMethod::wachter) return solve_wachter(row);
        try {
            return face_ce(model, *graph, window, row, predictions);
        } catch (const NoCounterfactualError& e) {
            if (!options.fallback_to_wachter) {
                CounterfactualResult r;
                r.origin = window.features.row_vector(row);
                r.action.assign(window.dim(), 0.0);
                r.counterfactual = r.origin;
                r.method = CeMethod::face;
                r.failure = e.what();
                return r;
            }
            auto r = solve_wachter(row);
            r.fallback_from_face = true;
            return r;
        }
    };

    std::vector<CounterfactualResult> results(rows.size());
    std::size_t threads = options.threads == 0 ? std::thread::hardware_concurrency() : options.threads;
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, rows.size() / 16));
    if (threads == 1) {
        for (std::size_t i = 0; i < rows.size(); ++i) results[i] = solve(rows[i]);
        return results;
    }
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < rows.size(); i += threads) results[i] = solve(rows[i]);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    pool.clear();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

std::string ces_to_csv(const std::vector<CounterfactualResult>& results,
                       std::span<const std::size_t> rows) {
    std::string out = "index,method,valid,cost";
    const std::size_t d = results.empty() ? 0 : results.front().action.size();
    for (std::size_t k = 0; k < d; ++k) out += ",c" + std::to_string(k + 1);
    out += "\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        out += std::to_string(rows.empty() ? i : rows[i]) + "," + to_string(r.method) + "," +
               (r.valid ? "1" : "0") + "," + format_double(r.cost);
        for (double c : r.action) out += "," + format_double(c);
        out += "\n";
    }
    return out;
}

}  // namespace driftgce

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "driftgce/classifier.hpp"
#include "driftgce/linalg.hpp"
#include "driftgce/scenario.hpp"

namespace driftgce {

enum class CeMethod { wachter, face };

std::string to_string(CeMethod m);
CeMethod ce_method_from_string(const std::string& s);

/// Per-instance counterfactual: x + action should flip the model.
struct CounterfactualResult {
    Vector origin;
    Vector action;
    // The counterfactual point. For FACE this is the endpoint row itself;
    // origin + action can differ from it in the last bit.
    Vector counterfactual;
    bool valid = false;
    CeMethod method = CeMethod::wachter;
    double cost = 0.0;  // L2 norm of action
    bool fallback_from_face = false;
    std::optional<std::size_t> endpoint_index;  // FACE only
    std::string failure;                        // empty when no failure occurred
};

/// Non-finite loss during descent; carries the last finite iterate.
class OptimizationError : public std::runtime_error {
public:
    OptimizationError(const std::string& what, Vector last_iterate)
        : std::runtime_error(what), last_iterate_(std::move(last_iterate)) {}
    const Vector& last_iterate() const { return last_iterate_; }

private:
    Vector last_iterate_;
};

/// No node with the opposite prediction is reachable in the FACE graph.
class NoCounterfactualError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct WachterOptions {
    double lambda = 0.01;
    double step_size = 0.1;
    std::size_t max_iterations = 5000;
    // Defaults to the opposite of the current prediction. Asking for the
    // class x already has is a precondition violation.
    std::optional<int> target_class;
};

/// Gradient descent on (p(x+c) - target)^2 + lambda * |c|^2 from c = 0,
/// stopping at the first iterate that flips the prediction.
CounterfactualResult wachter_ce(const Classifier& model, std::span<const double> x,
                                const WachterOptions& options = {});

struct FaceEdge {
    std::size_t to = 0;
    double length = 0.0;
    double weight = 0.0;
};

/// Symmetric weighted kNN graph over window rows. Components of the kNN graph
/// are joined pairwise by their shortest inter-component edge so that every
/// node can reach every other.
struct FaceGraph {
    std::vector<std::vector<FaceEdge>> adjacency;
    std::size_t k_neighbors = 0;
    double bandwidth = 0.0;
    double density_floor = 0.0;
    std::size_t knn_components = 0;    // before bridging
    std::size_t bridge_edges = 0;
    std::size_t rejected_zero_length = 0;
    std::vector<double> log_density;  // KDE at every node
    double target_density_quantile = 0.0;

    std::size_t size() const { return adjacency.size(); }
    std::size_t edge_count() const;
    std::optional<double> weight(std::size_t i, std::size_t j) const;
};

struct FaceOptions {
    std::size_t k_neighbors = 10;
    double bandwidth = 0.05;
    double density_floor = 1e-6;
    bool bridge_components = true;
    // Target nodes must reach this quantile of KDE density among the nodes
    // predicted in their class; 0 accepts every opposite-class node.
    double target_density_quantile = 0.5;
};

/// Gaussian KDE log-density at a point (log-sum-exp, never underflows).
double kde_log_density(const Matrix& points, std::span<const double> at, double bandwidth);

/// Edge weight = Euclidean length * max(-log p_hat(midpoint), floor).
FaceGraph build_face_graph(const SampleWindow& window, const FaceOptions& options = {});

/// Shortest path from row `row` to the nearest (by path weight) node whose
/// prediction differs and whose density passes the target quantile. Throws NoCounterfactualError when none is reachable.
/// `predictions`, when given, must hold model.predict for every window row.
CounterfactualResult face_ce(const Classifier& model, const FaceGraph& graph,
                             const SampleWindow& window, std::size_t row,
                             std::span<const int> predictions = {});

/// Looks x up among the window rows (exact match) and delegates.
CounterfactualResult face_ce(const Classifier& model, const FaceGraph& graph,
                             const SampleWindow& window, std::span<const double> x);

struct BatchOptions {
    CeMethod method = CeMethod::face;
    WachterOptions wachter;
    FaceOptions face;
    bool fallback_to_wachter = true;
    std::size_t threads = 0;  // 0: hardware concurrency
};

/// One result per requested row (all rows when `rows` is empty), in order.
/// Per-instance failures come back as invalid results with `failure` set.
std::vector<CounterfactualResult> batch_ces(const Classifier& model, const SampleWindow& window,
                                            const BatchOptions& options,
                                            std::span<const std::size_t> rows = {});

/// Same, over a prebuilt graph (ignored for Wachter).
std::vector<CounterfactualResult> batch_ces(const Classifier& model, const SampleWindow& window,
                                            const BatchOptions& options,
                                            const FaceGraph* graph,
                                            std::span<const std::size_t> rows);

std::string ces_to_csv(const std::vector<CounterfactualResult>& results,
                       std::span<const std::size_t> rows = {});

}  // namespace driftgce

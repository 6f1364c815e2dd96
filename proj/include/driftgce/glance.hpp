#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftgce/classifier.hpp"
#include "driftgce/counterfactual.hpp"
#include "driftgce/linalg.hpp"
#include "driftgce/scenario.hpp"

namespace driftgce {

/// ||x_i - x_j||_2 + (1 - cos(c_i, c_j)). A zero-norm CFAV makes the cosine
/// term 1.
double combined_distance(std::span<const double> x_i, std::span<const double> x_j,
                         std::span<const double> c_i, std::span<const double> c_j);

/// One cluster produced by the agglomerative merge.
struct GlanceCluster {
    Vector centroid;
    Vector cfav;
    std::size_t weight = 0;
    std::vector<std::size_t> members;  // indices into the clustered points, ascending
};

/// Observes every merge: (clusters before the merge, merged slot pair, distance).
struct GlanceMergeEvent {
    const std::vector<GlanceCluster>* clusters;
    std::size_t first;
    std::size_t second;
    double distance;
};
using GlanceObserver = std::function<void(const GlanceMergeEvent&)>;

/// Greedy agglomerative merging of per-point (x, c) pairs down to k clusters.
/// Every step merges the active pair with the smallest combined distance
/// between cluster centroids/CFAVs (ties: lexicographic by slot, slots
/// ordered by smallest member). Centroid and CFAV of a merge are the
/// weight-proportional means; weights add. Output order follows slots.
std::vector<GlanceCluster> glance(const Matrix& points, const Matrix& cfavs, std::size_t k,
                                  const GlanceObserver& observer = {});

std::vector<GlanceCluster> glance(const Matrix& points,
                                  const std::vector<CounterfactualResult>& ces, std::size_t k);

struct GroupExplanation {
    int class_label = 0;
    int pair_index = 0;  // 1-based within the class, by descending weight
    std::string group_key;
    Vector centroid;
    Vector cfav;
    std::size_t weight = 0;
    std::vector<std::size_t> members;  // window row indices
    double validity = 0.0;
    double proximity = 0.0;
};

struct GceProvenance {
    std::string base_method;
    std::uint64_t seed = 0;
    std::string window_hash;
    std::string model_hash;
    std::size_t window_size = 0;
    std::vector<int> empty_classes;
    std::map<int, std::size_t> explained_points;
    std::map<int, std::size_t> excluded_invalid;
    std::map<int, std::size_t> face_fallbacks;
};

struct GceModel {
    std::vector<GroupExplanation> groups;  // class 0 first, then by pair index
    std::array<std::size_t, 2> k_per_class{0, 0};
    GceProvenance provenance;

    std::vector<const GroupExplanation*> groups_of(int class_label) const;
    const GroupExplanation* find(const std::string& key) const;
    std::size_t dim() const { return groups.empty() ? 0 : groups.front().centroid.size(); }
};

std::string group_key(int class_label, int pair_index);

struct ExplainOptions {
    BatchOptions base;
    std::size_t k_max = 6;
    std::uint64_t seed = 0;
};

/// Per predicted class: x-means for k, base CEs, GLANCE, group metrics.
GceModel explain_window(const Classifier& model, const SampleWindow& window,
                        const ExplainOptions& options = {});

struct CfavAssignment {
    std::string group_key;
    Vector cfav;
    std::size_t group_index = 0;
};

/// Nearest centroid (L2) among groups of x's predicted class; ties go to the
/// lower group index. Throws std::invalid_argument when no such group exists.
CfavAssignment assign_cfav(const GceModel& gce, const Classifier& model,
                           std::span<const double> x);

struct GroupLosses {
    double validity = 0.0;
    double proximity = 0.0;
};

/// Dataset-level validity and proximity over the window that the GCE model
/// was fitted on; the denominator is the full window size.
GroupLosses group_losses(const Classifier& model, const GceModel& gce,
                         const SampleWindow& window);

inline constexpr int kGceFormatVersion = 1;

nlohmann::json gce_to_json(const GceModel& gce);
GceModel gce_from_json(const nlohmann::json& j);
void write_gce(const GceModel& gce, const std::filesystem::path& path);
GceModel read_gce(const std::filesystem::path& path);

}  // namespace driftgce

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftgce/classifier.hpp"
#include "driftgce/glance.hpp"
#include "driftgce/linalg.hpp"
#include "driftgce/scenario.hpp"

namespace driftgce {

// ---- data layer --------------------------------------------------------------

struct ClassMeans {
    WindowTag tag = WindowTag::pre;
    int class_label = 0;
    std::size_t count = 0;
    std::optional<Vector> mean;  // absent for an empty class
};

struct ClassMeansTable {
    std::vector<ClassMeans> entries;

    const ClassMeans* get(WindowTag tag, int class_label) const;
    void merge(const ClassMeansTable& other);
};

/// Per-class feature means of one window (labels, not predictions).
ClassMeansTable per_class_means(const SampleWindow& window);

// ---- model layer ---------------------------------------------------------------

enum class DisagreementMode { probability, label };

std::string to_string(DisagreementMode m);
DisagreementMode disagreement_mode_from_string(const std::string& s);

/// Rows of pre followed by rows of post.
Matrix evaluation_set(const SampleWindow& pre, const SampleWindow& post);

/// Mean |h_pre(x) - h_post(x)| over x_eval.
double global_disagreement(const Classifier& h_pre, const Classifier& h_post, const Matrix& x_eval,
                           DisagreementMode mode = DisagreementMode::probability);

// ---- explanation layer ---------------------------------------------------------

struct MatchedPair {
    int class_label = 0;
    std::string pre_key;
    std::string post_key;
    double centroid_distance = 0.0;
};

struct GroupMatching {
    std::vector<MatchedPair> pairs;
    std::vector<std::string> disappeared;  // pre keys without a partner
    std::vector<std::string> appeared;     // post keys without a partner
    double total_cost = 0.0;
};

/// Minimum-cost one-to-one assignment (Hungarian method) over a rows x cols
/// cost matrix. Returns, for every row, its column or nullopt when rows >
/// cols leaves it unassigned.
std::vector<std::optional<std::size_t>> min_cost_assignment(
    const std::vector<std::vector<double>>& cost);

/// Optimal L2 centroid assignment per class label. Surplus groups become
/// disappeared/appeared. With max_match_distance set, pairs farther apart
/// are split into one disappeared and one appeared group.
GroupMatching match_groups(const GceModel& pre, const GceModel& post,
                           std::optional<double> max_match_distance = std::nullopt);

struct LocalDisagreement {
    std::vector<std::optional<double>> values;  // per matched pair, absent if no points
    std::vector<std::size_t> counts;            // points assigned per pair
    std::vector<std::size_t> assignment;        // pair index per x_eval row
};

/// Disagreement restricted to the Voronoi cell of each matched pre centroid.
/// Throws std::invalid_argument when the matching has no pairs.
LocalDisagreement local_disagreement(const Classifier& h_pre, const Classifier& h_post,
                                     const Matrix& x_eval, const GroupMatching& matching,
                                     const GceModel& pre, const GceModel& post,
                                     DisagreementMode mode = DisagreementMode::probability);

struct GroupChange {
    int class_label = 0;
    std::string pre_key;
    std::string post_key;
    Vector centroid_shift;  // post - pre
    double centroid_shift_norm = 0.0;
    // Angle of the centroid displacement in the (x1, x2) plane, degrees in
    // (-180, 180], measured from +x1 (atan2(dx2, dx1)); 0 for no displacement.
    double centroid_direction_deg = 0.0;
    double cfav_cosine = 0.0;     // zero CFAV counts as 0
    double cfav_angle_deg = 0.0;  // acos(cfav_cosine), the CFAV directional change
    double cfav_euclidean = 0.0;
    Vector cfav_featurewise;  // post cfav - pre cfav
    std::optional<double> local_dmae;
};

std::vector<GroupChange> group_changes(const GroupMatching& matching, const GceModel& pre,
                                       const GceModel& post,
                                       std::span<const std::optional<double>> local);

// ---- synthesis -------------------------------------------------------------------

struct AnalysisThresholds {
    double no_model_change = 0.02;         // global d_mae below this: model unchanged
    double logic_inversion_cosine = -0.5;  // any pair below this: inverted logic
    double coincidence_distance = 0.1;     // centroids this close share a location
    double spatial_shift = 0.1;            // class-agnostic centroid moves above this
    std::optional<double> max_match_distance;
    DisagreementMode mode = DisagreementMode::probability;
};

nlohmann::json to_json(const AnalysisThresholds& t);
AnalysisThresholds analysis_thresholds_from_json(const nlohmann::json& j,
                                                 AnalysisThresholds base = {});

/// A pre group whose location is occupied post-drift only by a group of the
/// other class.
struct LabelSwap {
    std::string pre_key;
    std::string post_key;
    int pre_class = 0;
    int post_class = 0;
    double distance = 0.0;
};

struct DriftSignals {
    bool model_change = false;
    bool spatial_change = false;
    bool logic_inversion = false;
    bool relabeling = false;
    std::size_t disappeared = 0;
    std::size_t appeared = 0;
    double max_location_shift = 0.0;  // class-agnostic matched centroid distance
    double min_cfav_cosine = 1.0;
};

struct ReportProvenance {
    std::string scenario;
    std::string pre_window_hash;
    std::string post_window_hash;
    std::string pre_model_hash;
    std::string post_model_hash;
    std::string base_method;
};

struct GroupSnapshot {
    std::string key;
    int class_label = 0;
    Vector centroid;
    Vector cfav;
    std::size_t weight = 0;
    double validity = 0.0;
    double proximity = 0.0;
};

struct DriftReport {
    std::size_t dim = 0;
    ClassMeansTable means;
    double global_dmae = 0.0;
    double global_dmae_label = 0.0;  // hard-label variant, for comparison
    std::size_t eval_size = 0;
    GroupMatching matching;
    std::vector<std::size_t> local_counts;
    std::vector<GroupChange> changes;
    std::vector<LabelSwap> label_swaps;
    std::vector<GroupSnapshot> groups_pre;
    std::vector<GroupSnapshot> groups_post;
    DriftSignals signals;
    std::string headline;
    std::vector<std::string> findings;
    AnalysisThresholds thresholds;
    ReportProvenance provenance;
};

struct AnalysisInputs {
    const SampleWindow& pre_window;
    const SampleWindow& post_window;
    const Classifier& h_pre;
    const Classifier& h_post;
    const GceModel& gce_pre;
    const GceModel& gce_post;
    std::string scenario_name;
};

/// Runs every layer and assembles the report. Headline rules:
///   model change   = global d_mae >= no_model_change
///   spatial change = class-agnostic centroid matching leaves groups
///                    unmatched or moves one by more than spatial_shift
///   both -> "combined"; model only -> "real concept drift";
///   spatial only -> "data shift"; neither -> "no drift".
/// Throws std::invalid_argument when the GCE models were not fitted on these
/// windows/models (provenance hash mismatch).
DriftReport build_report(const AnalysisInputs& inputs, const AnalysisThresholds& thresholds = {});

inline constexpr int kReportFormatVersion = 1;

nlohmann::json report_to_json(const DriftReport& report);
std::string report_document(const DriftReport& report);

}  // namespace driftgce

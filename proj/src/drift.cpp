#include "driftgce/drift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "driftgce/io.hpp"

namespace driftgce {

// ---- data layer --------------------------------------------------------------

const ClassMeans* ClassMeansTable::get(WindowTag tag, int class_label) const {
    for (const auto& e : entries) {
        if (e.tag == tag && e.class_label == class_label) return &e;
    }
    return nullptr;
}

void ClassMeansTable::merge(const ClassMeansTable& other) {
    entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

ClassMeansTable per_class_means(const SampleWindow& window) {
    window.validate();
    ClassMeansTable table;
    for (int y = 0; y < 2; ++y) {
        ClassMeans e;
        e.tag = window.tag;
        e.class_label = y;
        Vector sum(window.dim(), 0.0);
        for (std::size_t i = 0; i < window.size(); ++i) {
            if (window.labels[i] != y) continue;
            ++e.count;
            auto row = window.features.row(i);
            for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += row[k];
        }
        if (e.count > 0) {
            for (double& s : sum) s /= static_cast<double>(e.count);
            e.mean = std::move(sum);
        }
        table.entries.push_back(std::move(e));
    }
    return table;
}

// ---- model layer ---------------------------------------------------------------

std::string to_string(DisagreementMode m) {
    return m == DisagreementMode::probability ? "probability" : "label";
}

DisagreementMode disagreement_mode_from_string(const std::string& s) {
    if (s == "probability") return DisagreementMode::probability;
    if (s == "label") return DisagreementMode::label;
    throw std::invalid_argument("unknown disagreement mode: " + s);
}

Matrix evaluation_set(const SampleWindow& pre, const SampleWindow& post) {
    require_same_dim(pre.dim(), post.dim(), "evaluation_set");
    Matrix x = pre.features;
    for (std::size_t i = 0; i < post.size(); ++i) x.append_row(post.features.row(i));
    return x;
}

namespace {

double output(const Classifier& h, std::span<const double> x, DisagreementMode mode) {
    return mode == DisagreementMode::probability ? h.predict_proba(x)
                                                 : static_cast<double>(h.predict(x));
}

}  // namespace

double global_disagreement(const Classifier& h_pre, const Classifier& h_post, const Matrix& x_eval,
                           DisagreementMode mode) {
    require_same_dim(h_pre.dim(), h_post.dim(), "global_disagreement");
    if (x_eval.empty()) throw std::invalid_argument("global_disagreement: empty evaluation set");
    require_same_dim(h_pre.dim(), x_eval.cols(), "global_disagreement");
    double total = 0.0;
    for (std::size_t i = 0; i < x_eval.rows(); ++i) {
        total += std::abs(output(h_pre, x_eval.row(i), mode) - output(h_post, x_eval.row(i), mode));
    }
    return total / static_cast<double>(x_eval.rows());
}

// ---- matching --------------------------------------------------------------------

std::vector<std::optional<std::size_t>> min_cost_assignment(
    const std::vector<std::vector<double>>& cost) {
    const std::size_t rows = cost.size();
    if (rows == 0) return {};
    const std::size_t cols = cost.front().size();
    for (const auto& r : cost) {
        if (r.size() != cols) throw std::invalid_argument("min_cost_assignment: ragged matrix");
    }
    std::vector<std::optional<std::size_t>> result(rows);
    if (cols == 0) return result;
    if (rows > cols) {
        std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t[j][i] = cost[i][j];
        const auto tr = min_cost_assignment(t);
        for (std::size_t j = 0; j < cols; ++j) {
            if (tr[j]) result[*tr[j]] = j;
        }
        return result;
    }
    // Shortest augmenting path with potentials, 1-based; rows <= cols.
    const std::size_t n = rows, m = cols;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) result[p[j] - 1] = j - 1;
    }
    return result;
}

GroupMatching match_groups(const GceModel& pre, const GceModel& post,
                           std::optional<double> max_match_distance) {
    if (!pre.groups.empty() && !post.groups.empty()) {
        require_same_dim(pre.dim(), post.dim(), "match_groups");
    }
    GroupMatching out;
    for (int y = 0; y < 2; ++y) {
        const auto a = pre.groups_of(y);
        const auto b = post.groups_of(y);
        std::vector<bool> b_used(b.size(), false);
        std::vector<std::vector<double>> cost(a.size(), std::vector<double>(b.size()));
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j)
                cost[i][j] = distance(a[i]->centroid, b[j]->centroid);
        const auto assign = min_cost_assignment(cost);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!assign.empty() && assign[i]) {
                const std::size_t j = *assign[i];
                const double d = cost[i][j];
                if (!max_match_distance || d <= *max_match_distance) {
                    out.pairs.push_back({y, a[i]->group_key, b[j]->group_key, d});
                    out.total_cost += d;
                    b_used[j] = true;
                    continue;
                }
            }
            out.disappeared.push_back(a[i]->group_key);
        }
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (!b_used[j]) out.appeared.push_back(b[j]->group_key);
        }
    }
    return out;
}

LocalDisagreement local_disagreement(const Classifier& h_pre, const Classifier& h_post,
                                     const Matrix& x_eval, const GroupMatching& matching,
                                     const GceModel& pre, const GceModel& /*post*/,
                                     DisagreementMode mode) {
    if (matching.pairs.empty()) {
        throw std::invalid_argument("local_disagreement: matching has no pairs");
    }
    require_same_dim(h_pre.dim(), x_eval.cols(), "local_disagreement");
    std::vector<const Vector*> centers;
    for (const auto& p : matching.pairs) {
        const auto* g = pre.find(p.pre_key);
        if (g == nullptr) throw std::invalid_argument("local_disagreement: unknown key " + p.pre_key);
        centers.push_back(&g->centroid);
    }
    LocalDisagreement out;
    out.values.assign(centers.size(), std::nullopt);
    out.counts.assign(centers.size(), 0);
    out.assignment.resize(x_eval.rows());
    std::vector<double> sums(centers.size(), 0.0);
    for (std::size_t i = 0; i < x_eval.rows(); ++i) {
        auto x = x_eval.row(i);
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const double d = squared_distance(*centers[c], x);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        out.assignment[i] = best;
        ++out.counts[best];
        sums[best] += std::abs(output(h_pre, x, mode) - output(h_post, x, mode));
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
        if (out.counts[c] > 0) out.values[c] = sums[c] / static_cast<double>(out.counts[c]);
    }
    return out;
}

std::vector<GroupChange> group_changes(const GroupMatching& matching, const GceModel& pre,
                                       const GceModel& post,
                                       std::span<const std::optional<double>> local) {
    if (!local.empty() && local.size() != matching.pairs.size()) {
        throw std::invalid_argument("group_changes: local values do not match pairs");
    }
    std::vector<GroupChange> out;
    for (std::size_t i = 0; i < matching.pairs.size(); ++i) {
        const auto& p = matching.pairs[i];
        const auto* a = pre.find(p.pre_key);
        const auto* b = post.find(p.post_key);
        if (a == nullptr || b == nullptr) {
            throw std::invalid_argument("group_changes: matching refers to unknown groups");
        }
        GroupChange c;
        c.class_label = p.class_label;
        c.pre_key = p.pre_key;
        c.post_key = p.post_key;
        c.centroid_shift = subtract(b->centroid, a->centroid);
        c.centroid_shift_norm = norm(c.centroid_shift);
        if (c.centroid_shift_norm > 0.0) {
            const double dx = c.centroid_shift[0];
            const double dy = c.centroid_shift.size() > 1 ? c.centroid_shift[1] : 0.0;
            c.centroid_direction_deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
        }
        c.cfav_cosine = cosine_similarity(a->cfav, b->cfav);
        c.cfav_angle_deg = std::acos(c.cfav_cosine) * 180.0 / std::numbers::pi;
        c.cfav_featurewise = subtract(b->cfav, a->cfav);
        c.cfav_euclidean = norm(c.cfav_featurewise);
        if (!local.empty()) c.local_dmae = local[i];
        out.push_back(std::move(c));
    }
    return out;
}

// ---- synthesis -------------------------------------------------------------------

nlohmann::json to_json(const AnalysisThresholds& t) {
    nlohmann::json j = {{"no_model_change", t.no_model_change},
                        {"logic_inversion_cosine", t.logic_inversion_cosine},
                        {"coincidence_distance", t.coincidence_distance},
                        {"spatial_shift", t.spatial_shift},
                        {"disagreement_mode", to_string(t.mode)}};
    j["max_match_distance"] =
        t.max_match_distance ? nlohmann::json(*t.max_match_distance) : nlohmann::json(nullptr);
    return j;
}

AnalysisThresholds analysis_thresholds_from_json(const nlohmann::json& j, AnalysisThresholds base) {
    base.no_model_change = j.value("no_model_change", base.no_model_change);
    base.logic_inversion_cosine = j.value("logic_inversion_cosine", base.logic_inversion_cosine);
    base.coincidence_distance = j.value("coincidence_distance", base.coincidence_distance);
    base.spatial_shift = j.value("spatial_shift", base.spatial_shift);
    if (j.contains("disagreement_mode")) {
        base.mode = disagreement_mode_from_string(j.at("disagreement_mode").get<std::string>());
    }
    if (j.contains("max_match_distance")) {
        const auto& v = j.at("max_match_distance");
        base.max_match_distance =
            v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    return base;
}

namespace {

GroupSnapshot snapshot(const GroupExplanation& g) {
    return {g.group_key, g.class_label, g.centroid, g.cfav, g.weight, g.validity, g.proximity};
}

std::string fixed(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

// Class-agnostic centroid assignment; returns (unmatched count, max distance).
std::pair<std::size_t, double> location_changes(const GceModel& pre, const GceModel& post) {
    std::vector<std::vector<double>> cost(pre.groups.size(),
                                          std::vector<double>(post.groups.size()));
    for (std::size_t i = 0; i < pre.groups.size(); ++i)
        for (std::size_t j = 0; j < post.groups.size(); ++j)
            cost[i][j] = distance(pre.groups[i].centroid, post.groups[j].centroid);
    const auto assign = min_cost_assignment(cost);
    std::size_t matched = 0;
    double max_d = 0.0;
    for (std::size_t i = 0; i < assign.size(); ++i) {
        if (!assign[i]) continue;
        ++matched;
        max_d = std::max(max_d, cost[i][*assign[i]]);
    }
    const std::size_t unmatched = pre.groups.size() + post.groups.size() - 2 * matched;
    return {unmatched, max_d};
}

}  // namespace

DriftReport build_report(const AnalysisInputs& in, const AnalysisThresholds& thresholds) {
    in.pre_window.validate();
    in.post_window.validate();
    require_same_dim(in.pre_window.dim(), in.post_window.dim(), "build_report");
    require_same_dim(in.h_pre.dim(), in.pre_window.dim(), "build_report");
    require_same_dim(in.h_post.dim(), in.pre_window.dim(), "build_report");
    auto check = [](const std::string& expected, const std::string& actual, const char* what) {
        if (expected != actual) {
            throw std::invalid_argument(std::string("build_report: provenance mismatch for ") +
                                        what + " (" + expected + " vs " + actual + ")");
        }
    };
    const std::string pre_wh = hex_hash(window_hash(in.pre_window));
    const std::string post_wh = hex_hash(window_hash(in.post_window));
    const std::string pre_mh = hex_hash(in.h_pre.hash());
    const std::string post_mh = hex_hash(in.h_post.hash());
    check(in.gce_pre.provenance.window_hash, pre_wh, "pre window");
    check(in.gce_post.provenance.window_hash, post_wh, "post window");
    check(in.gce_pre.provenance.model_hash, pre_mh, "pre model");
    check(in.gce_post.provenance.model_hash, post_mh, "post model");

    DriftReport r;
    r.dim = in.pre_window.dim();
    r.thresholds = thresholds;
    r.provenance = {in.scenario_name, pre_wh, post_wh, pre_mh, post_mh,
                    in.gce_pre.provenance.base_method};

    r.means = per_class_means(in.pre_window);
    r.means.merge(per_class_means(in.post_window));

    const Matrix x_eval = evaluation_set(in.pre_window, in.post_window);
    r.eval_size = x_eval.rows();
    r.global_dmae = global_disagreement(in.h_pre, in.h_post, x_eval, thresholds.mode);
    r.global_dmae_label =
        global_disagreement(in.h_pre, in.h_post, x_eval, DisagreementMode::label);

    r.matching = match_groups(in.gce_pre, in.gce_post, thresholds.max_match_distance);
    std::vector<std::optional<double>> local;
    if (!r.matching.pairs.empty()) {
        auto ld = local_disagreement(in.h_pre, in.h_post, x_eval, r.matching, in.gce_pre,
                                     in.gce_post, thresholds.mode);
        local = ld.values;
        r.local_counts = ld.counts;
    }
    r.changes = group_changes(r.matching, in.gce_pre, in.gce_post, local);
    for (const auto& g : in.gce_pre.groups) r.groups_pre.push_back(snapshot(g));
    for (const auto& g : in.gce_post.groups) r.groups_post.push_back(snapshot(g));

    // Relabeled locations: the nearest post group is of the other class and
    // no same-class post group shares the location.
    for (const auto& a : in.gce_pre.groups) {
        const GroupExplanation* same = nullptr;
        const GroupExplanation* other = nullptr;
        double ds = std::numeric_limits<double>::infinity();
        double dother = std::numeric_limits<double>::infinity();
        for (const auto& b : in.gce_post.groups) {
            const double d = distance(a.centroid, b.centroid);
            if (b.class_label == a.class_label && d < ds) {
                ds = d;
                same = &b;
            }
            if (b.class_label != a.class_label && d < dother) {
                dother = d;
                other = &b;
            }
        }
        if (other != nullptr && dother <= thresholds.coincidence_distance &&
            (same == nullptr || ds > thresholds.coincidence_distance)) {
            r.label_swaps.push_back(
                {a.group_key, other->group_key, a.class_label, other->class_label, dother});
        }
    }

    auto& s = r.signals;
    s.disappeared = r.matching.disappeared.size();
    s.appeared = r.matching.appeared.size();
    const auto [unmatched_locations, max_shift] = location_changes(in.gce_pre, in.gce_post);
    s.max_location_shift = max_shift;
    s.model_change = r.global_dmae >= thresholds.no_model_change;
    s.spatial_change = unmatched_locations > 0 || max_shift > thresholds.spatial_shift;
    s.relabeling = !r.label_swaps.empty();
    for (const auto& c : r.changes) s.min_cfav_cosine = std::min(s.min_cfav_cosine, c.cfav_cosine);
    s.logic_inversion = !r.changes.empty() && s.min_cfav_cosine < thresholds.logic_inversion_cosine;

    if (s.model_change && s.spatial_change) {
        r.headline = "combined";
    } else if (s.model_change) {
        r.headline = "real concept drift";
    } else if (s.spatial_change) {
        r.headline = "data shift";
    } else {
        r.headline = "no drift";
    }

    auto& f = r.findings;
    f.push_back("global disagreement d_mae = " + fixed(r.global_dmae) +
                (s.model_change ? " (model changed)" : " (model unchanged)"));
    for (int y = 0; y < 2; ++y) {
        const auto* a = r.means.get(WindowTag::pre, y);
        const auto* b = r.means.get(WindowTag::post, y);
        if (a && b && a->mean && b->mean) {
            f.push_back("class " + std::to_string(y) + " feature means " +
                        format_vector(*a->mean, 3) + " -> " + format_vector(*b->mean, 3));
        }
    }
    for (const auto& k : r.matching.disappeared) f.push_back(k + " has disappeared");
    for (const auto& k : r.matching.appeared) f.push_back(k + " has appeared");
    for (const auto& sw : r.label_swaps) {
        f.push_back("location of pre " + sw.pre_key + " is now explained by " + sw.post_key +
                    " (label swap)");
    }
    if (!r.changes.empty()) {
        const auto hottest = std::max_element(
            r.changes.begin(), r.changes.end(), [](const GroupChange& a, const GroupChange& b) {
                return a.local_dmae.value_or(-1.0) < b.local_dmae.value_or(-1.0);
            });
        if (hottest->local_dmae) {
            f.push_back("highest local disagreement: " + hottest->pre_key + " (" +
                        fixed(*hottest->local_dmae) + ")");
        }
        const auto turned = std::max_element(
            r.changes.begin(), r.changes.end(), [](const GroupChange& a, const GroupChange& b) {
                return a.cfav_angle_deg < b.cfav_angle_deg;
            });
        f.push_back("largest CFAV directional change: " + turned->pre_key + " (" +
                    fixed(turned->cfav_angle_deg, 1) + " deg)");
    }
    if (s.logic_inversion) {
        f.push_back("counterfactual logic inverted (min CFAV cosine " + fixed(s.min_cfav_cosine) +
                    ")");
    }
    return r;
}

nlohmann::json report_to_json(const DriftReport& r) {
    using nlohmann::json;
    json j;
    j["format_version"] = kReportFormatVersion;
    j["dim"] = r.dim;
    j["headline"] = r.headline;
    j["findings"] = r.findings;
    j["thresholds"] = to_json(r.thresholds);
    j["provenance"] = {{"scenario", r.provenance.scenario},
                       {"pre_window_hash", r.provenance.pre_window_hash},
                       {"post_window_hash", r.provenance.post_window_hash},
                       {"pre_model_hash", r.provenance.pre_model_hash},
                       {"post_model_hash", r.provenance.post_model_hash},
                       {"base_method", r.provenance.base_method}};
    const auto& s = r.signals;
    j["signals"] = {{"model_change", s.model_change},
                    {"spatial_change", s.spatial_change},
                    {"logic_inversion", s.logic_inversion},
                    {"relabeling", s.relabeling},
                    {"disappeared", s.disappeared},
                    {"appeared", s.appeared},
                    {"max_location_shift", s.max_location_shift},
                    {"min_cfav_cosine", s.min_cfav_cosine}};

    auto& means = j["data_layer"]["class_means"] = json::array();
    for (const auto& e : r.means.entries) {
        means.push_back({{"window", to_string(e.tag)},
                         {"class", e.class_label},
                         {"count", e.count},
                         {"mean", e.mean ? json(*e.mean) : json(nullptr)}});
    }

    j["model_layer"] = {{"global_dmae", r.global_dmae},
                        {"global_dmae_label", r.global_dmae_label},
                        {"eval_size", r.eval_size},
                        {"mode", to_string(r.thresholds.mode)}};
    auto& local = j["model_layer"]["local"] = json::array();
    for (std::size_t i = 0; i < r.changes.size(); ++i) {
        const auto& c = r.changes[i];
        local.push_back({{"pre_key", c.pre_key},
                         {"post_key", c.post_key},
                         {"count", i < r.local_counts.size() ? r.local_counts[i] : 0},
                         {"dmae", c.local_dmae ? json(*c.local_dmae) : json(nullptr)}});
    }

    auto groups = [](const std::vector<GroupSnapshot>& gs) {
        json a = json::array();
        for (const auto& g : gs) {
            a.push_back({{"key", g.key},
                         {"class", g.class_label},
                         {"centroid", g.centroid},
                         {"cfav", g.cfav},
                         {"weight", g.weight},
                         {"validity", g.validity},
                         {"proximity", g.proximity}});
        }
        return a;
    };
    auto& ex = j["explanation_layer"];
    ex["groups_pre"] = groups(r.groups_pre);
    ex["groups_post"] = groups(r.groups_post);
    auto& pairs = ex["matching"]["pairs"] = json::array();
    for (const auto& p : r.matching.pairs) {
        pairs.push_back({{"class", p.class_label},
                         {"pre_key", p.pre_key},
                         {"post_key", p.post_key},
                         {"centroid_distance", p.centroid_distance}});
    }
    ex["matching"]["disappeared"] = r.matching.disappeared;
    ex["matching"]["appeared"] = r.matching.appeared;
    ex["matching"]["total_cost"] = r.matching.total_cost;
    auto& changes = ex["changes"] = json::array();
    for (const auto& c : r.changes) {
        changes.push_back({{"class", c.class_label},
                           {"pre_key", c.pre_key},
                           {"post_key", c.post_key},
                           {"centroid_shift", c.centroid_shift},
                           {"centroid_shift_norm", c.centroid_shift_norm},
                           {"centroid_direction_deg", c.centroid_direction_deg},
                           {"cfav_cosine", c.cfav_cosine},
                           {"cfav_angle_deg", c.cfav_angle_deg},
                           {"cfav_euclidean", c.cfav_euclidean},
                           {"cfav_featurewise", c.cfav_featurewise},
                           {"local_dmae", c.local_dmae ? json(*c.local_dmae) : json(nullptr)}});
    }
    auto& swaps = ex["label_swaps"] = json::array();
    for (const auto& sw : r.label_swaps) {
        swaps.push_back({{"pre_key", sw.pre_key},
                         {"post_key", sw.post_key},
                         {"pre_class", sw.pre_class},
                         {"post_class", sw.post_class},
                         {"distance", sw.distance}});
    }
    return j;
}

std::string report_document(const DriftReport& report) {
    return report_to_json(report).dump(2) + "\n";
}

}  // namespace driftgce

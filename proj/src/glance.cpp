#include "driftgce/glance.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "driftgce/io.hpp"
#include "driftgce/xmeans.hpp"

namespace driftgce {

double combined_distance(std::span<const double> x_i, std::span<const double> x_j,
                         std::span<const double> c_i, std::span<const double> c_j) {
    require_same_dim(x_i.size(), x_j.size(), "combined_distance");
    require_same_dim(x_i.size(), c_i.size(), "combined_distance");
    require_same_dim(x_i.size(), c_j.size(), "combined_distance");
    return distance(x_i, x_j) + (1.0 - cosine_similarity(c_i, c_j));
}

std::vector<GlanceCluster> glance(const Matrix& points, const Matrix& cfavs, std::size_t k,
                                  const GlanceObserver& observer) {
    const std::size_t n = points.rows();
    if (cfavs.rows() != n) throw std::invalid_argument("glance: points/CFAV count mismatch");
    if (n > 0) require_same_dim(points.cols(), cfavs.cols(), "glance");
    if (k == 0) throw std::invalid_argument("glance: k must be >= 1");
    if (k > n) throw std::invalid_argument("glance: k exceeds the number of points");

    std::vector<GlanceCluster> clusters(n);
    for (std::size_t i = 0; i < n; ++i) {
        clusters[i].centroid = points.row_vector(i);
        clusters[i].cfav = cfavs.row_vector(i);
        clusters[i].weight = 1;
        clusters[i].members = {i};
    }
    // Slot i holds the cluster whose smallest member is i; merged clusters
    // keep the lower slot, so slot order is smallest-member order.
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), 0);
    std::vector<double> dist(n * n, 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return dist[i * n + j]; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            at(i, j) = at(j, i) = combined_distance(clusters[i].centroid, clusters[j].centroid,
                                                    clusters[i].cfav, clusters[j].cfav);
        }
    }

    while (active.size() > k) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t a = 0; a < active.size(); ++a) {
            const std::size_t i = active[a];
            const double* row = &dist[i * n];
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const double v = row[active[b]];
                if (v < best) {
                    best = v;
                    bi = a;
                    bj = b;
                }
            }
        }
        const std::size_t i = active[bi];
        const std::size_t j = active[bj];
        if (observer) {
            std::vector<GlanceCluster> snapshot;
            snapshot.reserve(active.size());
            for (std::size_t s : active) snapshot.push_back(clusters[s]);
            observer(GlanceMergeEvent{&snapshot, bi, bj, best});
        }
        GlanceCluster& a = clusters[i];
        GlanceCluster& b = clusters[j];
        const double wa = static_cast<double>(a.weight);
        const double wb = static_cast<double>(b.weight);
        for (std::size_t t = 0; t < a.centroid.size(); ++t) {
            a.centroid[t] = (wa * a.centroid[t] + wb * b.centroid[t]) / (wa + wb);
            a.cfav[t] = (wa * a.cfav[t] + wb * b.cfav[t]) / (wa + wb);
        }
        a.weight += b.weight;
        std::vector<std::size_t> merged;
        merged.reserve(a.members.size() + b.members.size());
        std::merge(a.members.begin(), a.members.end(), b.members.begin(), b.members.end(),
                   std::back_inserter(merged));
        a.members = std::move(merged);
        b = GlanceCluster{};
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
        for (std::size_t s : active) {
            if (s == i) continue;
            at(i, s) = at(s, i) =
                combined_distance(a.centroid, clusters[s].centroid, a.cfav, clusters[s].cfav);
        }
    }

    std::vector<GlanceCluster> out;
    out.reserve(active.size());
    for (std::size_t s : active) out.push_back(std::move(clusters[s]));
    return out;
}

std::vector<GlanceCluster> glance(const Matrix& points,
                                  const std::vector<CounterfactualResult>& ces, std::size_t k) {
    Matrix cfavs(0, points.cols());
    for (const auto& ce : ces) {
        if (!ce.valid) throw std::invalid_argument("glance: invalid base counterfactual");
        cfavs.append_row(ce.action);
    }
    return glance(points, cfavs, k);
}

std::string group_key(int class_label, int pair_index) {
    return "Class " + std::to_string(class_label) + ", Pair " + std::to_string(pair_index);
}

std::vector<const GroupExplanation*> GceModel::groups_of(int class_label) const {
    std::vector<const GroupExplanation*> out;
    for (const auto& g : groups) {
        if (g.class_label == class_label) out.push_back(&g);
    }
    return out;
}

const GroupExplanation* GceModel::find(const std::string& key) const {
    for (const auto& g : groups) {
        if (g.group_key == key) return &g;
    }
    return nullptr;
}

GceModel explain_window(const Classifier& model, const SampleWindow& window,
                        const ExplainOptions& options) {
    window.validate();
    require_same_dim(model.dim(), window.dim(), "explain_window");
    const std::size_t n = window.size();
    std::vector<int> predicted(n);
    std::array<std::vector<std::size_t>, 2> rows_of;
    for (std::size_t i = 0; i < n; ++i) {
        predicted[i] = model.predict(window.features.row(i));
        rows_of[predicted[i]].push_back(i);
    }

    GceModel gce;
    gce.provenance.base_method = to_string(options.base.method);
    gce.provenance.seed = options.seed;
    gce.provenance.window_hash = hex_hash(window_hash(window));
    gce.provenance.model_hash = hex_hash(model.hash());
    gce.provenance.window_size = n;

    std::optional<FaceGraph> graph;
    if (options.base.method == CeMethod::face) graph = build_face_graph(window, options.base.face);

    for (int y = 0; y < 2; ++y) {
        const auto& rows = rows_of[y];
        gce.provenance.explained_points[y] = 0;
        gce.provenance.excluded_invalid[y] = 0;
        gce.provenance.face_fallbacks[y] = 0;
        if (rows.empty()) {
            gce.provenance.empty_classes.push_back(y);
            continue;
        }
        auto ces = batch_ces(model, window, options.base, graph ? &*graph : nullptr, rows);
        std::vector<std::size_t> kept_rows;
        Matrix cfavs(0, window.dim());
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (ces[t].fallback_from_face) ++gce.provenance.face_fallbacks[y];
            if (!ces[t].valid) {
                ++gce.provenance.excluded_invalid[y];
                continue;
            }
            kept_rows.push_back(rows[t]);
            cfavs.append_row(ces[t].action);
        }
        gce.provenance.explained_points[y] = kept_rows.size();
        if (kept_rows.empty()) {
            gce.provenance.empty_classes.push_back(y);
            continue;
        }
        const Matrix points = window.features.select_rows(kept_rows);
        const std::size_t k =
            kept_rows.size() < 2
                ? 1
                : std::min(estimate_k(points, options.k_max, derive_seed(options.seed, y)),
                           kept_rows.size());
        auto clusters = glance(points, cfavs, k);
        gce.k_per_class[y] = clusters.size();

        std::vector<std::size_t> order(clusters.size());
        std::iota(order.begin(), order.end(), 0);
        // slots are already in smallest-member order, so stable_sort keeps
        // that as the tie rule
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return clusters[a].weight > clusters[b].weight;
        });
        int pair = 0;
        for (std::size_t c : order) {
            auto& cl = clusters[c];
            GroupExplanation g;
            g.class_label = y;
            g.pair_index = ++pair;
            g.group_key = group_key(y, pair);
            g.centroid = cl.centroid;
            g.cfav = cl.cfav;
            g.weight = cl.weight;
            for (std::size_t m : cl.members) g.members.push_back(kept_rows[m]);
            std::size_t flipped = 0;
            for (std::size_t r : g.members) {
                const Vector moved = add(window.features.row(r), g.cfav);
                flipped += model.predict(moved) != predicted[r] ? 1 : 0;
            }
            g.validity = static_cast<double>(flipped) / static_cast<double>(g.members.size());
            g.proximity = norm(g.cfav);
            gce.groups.push_back(std::move(g));
        }
    }
    return gce;
}

CfavAssignment assign_cfav(const GceModel& gce, const Classifier& model,
                           std::span<const double> x) {
    require_same_dim(model.dim(), x.size(), "assign_cfav");
    if (gce.groups.empty()) throw std::invalid_argument("assign_cfav: empty GCE model");
    require_same_dim(gce.dim(), x.size(), "assign_cfav");
    const int y = model.predict(x);
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < gce.groups.size(); ++i) {
        if (gce.groups[i].class_label != y) continue;
        const double d = distance(gce.groups[i].centroid, x);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (!best) {
        throw std::invalid_argument("assign_cfav: no group explains predicted class " +
                                    std::to_string(y));
    }
    const auto& g = gce.groups[*best];
    return {g.group_key, g.cfav, *best};
}

GroupLosses group_losses(const Classifier& model, const GceModel& gce,
                         const SampleWindow& window) {
    window.validate();
    GroupLosses out;
    const double n = static_cast<double>(window.size());
    for (const auto& g : gce.groups) {
        for (std::size_t r : g.members) {
            auto x = window.features.row(r);
            const Vector moved = add(x, g.cfav);
            if (model.predict(x) != model.predict(moved)) out.validity += 1.0;
            out.proximity += distance(x, moved);
        }
    }
    out.validity /= n;
    out.proximity /= n;
    return out;
}

// ---- dump ------------------------------------------------------------------

nlohmann::json gce_to_json(const GceModel& gce) {
    nlohmann::json j;
    j["format_version"] = kGceFormatVersion;
    j["k_per_class"] = gce.k_per_class;
    const auto& p = gce.provenance;
    auto by_class = [](const std::map<int, std::size_t>& m) {
        nlohmann::json o = nlohmann::json::object();
        for (const auto& [k, v] : m) o[std::to_string(k)] = v;
        return o;
    };
    j["provenance"] = {{"base_method", p.base_method},
                       {"seed", p.seed},
                       {"window_hash", p.window_hash},
                       {"model_hash", p.model_hash},
                       {"window_size", p.window_size},
                       {"empty_classes", p.empty_classes},
                       {"explained_points", by_class(p.explained_points)},
                       {"excluded_invalid", by_class(p.excluded_invalid)},
                       {"face_fallbacks", by_class(p.face_fallbacks)}};
    auto& groups = j["groups"] = nlohmann::json::array();
    for (const auto& g : gce.groups) {
        groups.push_back({{"class", g.class_label},
                          {"pair", g.pair_index},
                          {"key", g.group_key},
                          {"weight", g.weight},
                          {"centroid", g.centroid},
                          {"cfav", g.cfav},
                          {"validity", g.validity},
                          {"proximity", g.proximity},
                          {"members", g.members}});
    }
    return j;
}

GceModel gce_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format_version", 0) != kGceFormatVersion) {
            throw std::invalid_argument("unsupported GCE format_version");
        }
        GceModel gce;
        gce.k_per_class = j.at("k_per_class").get<std::array<std::size_t, 2>>();
        const auto& p = j.at("provenance");
        gce.provenance.base_method = p.at("base_method").get<std::string>();
        gce.provenance.seed = p.at("seed").get<std::uint64_t>();
        gce.provenance.window_hash = p.at("window_hash").get<std::string>();
        gce.provenance.model_hash = p.at("model_hash").get<std::string>();
        gce.provenance.window_size = p.at("window_size").get<std::size_t>();
        gce.provenance.empty_classes = p.value("empty_classes", std::vector<int>{});
        for (const auto* key : {"explained_points", "excluded_invalid", "face_fallbacks"}) {
            auto& dst = std::string(key) == "explained_points"   ? gce.provenance.explained_points
                        : std::string(key) == "excluded_invalid" ? gce.provenance.excluded_invalid
                                                                 : gce.provenance.face_fallbacks;
            const nlohmann::json counts = p.value(key, nlohmann::json::object());
            for (const auto& [k, v] : counts.items()) {
                dst[std::stoi(k)] = v.get<std::size_t>();
            }
        }
        for (const auto& g : j.at("groups")) {
            GroupExplanation e;
            e.class_label = g.at("class").get<int>();
            e.pair_index = g.at("pair").get<int>();
            e.group_key = g.at("key").get<std::string>();
            e.weight = g.at("weight").get<std::size_t>();
            e.centroid = g.at("centroid").get<Vector>();
            e.cfav = g.at("cfav").get<Vector>();
            e.validity = g.at("validity").get<double>();
            e.proximity = g.at("proximity").get<double>();
            e.members = g.at("members").get<std::vector<std::size_t>>();
            if (e.centroid.size() != e.cfav.size()) {
                throw std::invalid_argument("GCE group centroid/cfav dimension mismatch");
            }
            gce.groups.push_back(std::move(e));
        }
        return gce;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed GCE file: ") + e.what());
    }
}

void write_gce(const GceModel& gce, const std::filesystem::path& path) {
    write_text_file(path, gce_to_json(gce).dump(2) + "\n");
}

GceModel read_gce(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return gce_from_json(j);
}

}  // namespace driftgce

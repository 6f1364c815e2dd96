#include "driftgce/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>
#include <stdexcept>

#include "driftgce/io.hpp"
#include "driftgce/rng.hpp"

namespace driftgce {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

SubConcept make_blob(int id, int label, double weight, double x1, double x2,
                     double sigma = kDefaultSigma) {
    return SubConcept{id, label, weight, {x1, x2}, {sigma, sigma}};
}

std::vector<SubConcept>::iterator find_id(std::vector<SubConcept>& s, int id) {
    auto it = std::find_if(s.begin(), s.end(), [id](const SubConcept& c) { return c.id == id; });
    if (it == s.end()) {
        throw std::invalid_argument("drift references unknown sub-concept id " +
                                    std::to_string(id));
    }
    return it;
}

}  // namespace

std::string DriftSpec::kind() const {
    if (steps.empty()) {
        return "none";
    }
    if (steps.size() > 1) {
        return "combined";
    }
    return std::visit(Overloaded{[](const VanishStep&) { return std::string("vanish"); },
                                 [](const SwapLabelsStep&) { return std::string("swap_labels"); },
                                 [](const ShiftStep&) { return std::string("shift"); }},
                      steps.front());
}

std::string to_string(WindowTag tag) { return tag == WindowTag::pre ? "pre" : "post"; }

WindowTag window_tag_from_string(const std::string& s) {
    if (s == "pre") return WindowTag::pre;
    if (s == "post") return WindowTag::post;
    throw std::invalid_argument("unknown window tag: " + s);
}

void SampleWindow::validate() const {
    if (labels.empty()) {
        throw std::invalid_argument("window is empty");
    }
    if (features.rows() != labels.size()) {
        throw std::invalid_argument("window features/labels length mismatch");
    }
    if (subconcept_ids && subconcept_ids->size() != labels.size()) {
        throw std::invalid_argument("window subconcept ids length mismatch");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) {
            throw std::invalid_argument("window labels must be 0 or 1");
        }
    }
}

void validate_scenario(const std::vector<SubConcept>& scenario) {
    if (scenario.empty()) {
        throw std::invalid_argument("scenario has no sub-concepts");
    }
    const std::size_t d = scenario.front().mean.size();
    if (d == 0) {
        throw std::invalid_argument("sub-concept mean is empty");
    }
    std::set<int> ids;
    for (const auto& c : scenario) {
        if (!ids.insert(c.id).second) {
            throw std::invalid_argument("duplicate sub-concept id " + std::to_string(c.id));
        }
        if (c.mean.size() != d || c.stddev.size() != d) {
            throw std::invalid_argument("sub-concept " + std::to_string(c.id) +
                                        ": inconsistent dimensionality");
        }
        if (c.label != 0 && c.label != 1) {
            throw std::invalid_argument("sub-concept " + std::to_string(c.id) +
                                        ": label must be 0 or 1");
        }
        if (!(c.weight > 0.0)) {
            throw std::invalid_argument("sub-concept " + std::to_string(c.id) +
                                        ": weight must be > 0");
        }
        for (std::size_t k = 0; k < d; ++k) {
            if (!(c.mean[k] >= 0.0 && c.mean[k] <= 1.0)) {
                throw std::invalid_argument("sub-concept " + std::to_string(c.id) +
                                            ": mean outside [0,1]");
            }
            if (!(c.stddev[k] > 0.0)) {
                throw std::invalid_argument("sub-concept " + std::to_string(c.id) +
                                            ": stddev must be > 0");
            }
        }
    }
}

ScenarioConfig build_case(int case_id, std::size_t n_per_window, std::uint64_t seed) {
    if (n_per_window < 200) {
        throw std::invalid_argument("n_per_window must be >= 200");
    }
    ScenarioConfig cfg;
    cfg.n_per_window = n_per_window;
    cfg.seed = seed;
    switch (case_id) {
        case 1:
            // Class 0 averages (0.67, 0.5); class 1 averages (0.15, 0.5) and,
            // once sub-concept 3 vanishes, (0.1, 0.1). Sub-concept 1 faces
            // sub-concept 4 across a near-vertical boundary that also keeps
            // the vacated corner on the class-1 side.
            cfg.name = "case1_data_shift";
            cfg.subconcepts = {make_blob(1, 0, 1.0, 0.5, 0.1), make_blob(2, 0, 1.0, 0.84, 0.9),
                               make_blob(3, 1, 1.0, 0.2, 0.9), make_blob(4, 1, 1.0, 0.1, 0.1)};
            cfg.drift.steps = {VanishStep{3}};
            cfg.notes = "sub-concept 3 (class 1, upper left) vanishes";
            break;
        case 2: {
            // Four sub-concepts on the vertical line x1 = 0.5; the two outer
            // ones exchange labels. The outer gaps are narrower than the
            // middle one so every group has an unambiguous nearest opposite
            // class before and after the swap.
            cfg.name = "case2_label_swap";
            constexpr double s = 0.04;
            cfg.subconcepts = {make_blob(1, 0, 1.0, 0.5, 0.05, s), make_blob(2, 0, 1.0, 0.5, 0.3, s),
                               make_blob(3, 1, 1.0, 0.5, 0.7, s), make_blob(4, 1, 1.0, 0.5, 0.95, s)};
            cfg.drift.steps = {SwapLabelsStep{1, 4}};
            cfg.notes = "outer sub-concepts 1 and 4 swap labels; P(X) unchanged";
            break;
        }
        case 3:
            // Class 0 (0.5, 0.3) -> (0.5, 0.4) by shifting sub-concept 2 up;
            // class 1 (0.5, 0.7) -> (0.2, 0.7) as sub-concept 4 vanishes.
            // Sub-concept 1 sits between the two class-1 modes, so the region
            // left by sub-concept 4 falls to class 0 after retraining.
            cfg.name = "case3_combined";
            cfg.subconcepts = {make_blob(1, 0, 1.0, 0.6, 0.5), make_blob(2, 0, 1.0, 0.4, 0.1),
                               make_blob(3, 1, 1.0, 0.2, 0.7), make_blob(4, 1, 1.0, 0.8, 0.7)};
            cfg.drift.steps = {ShiftStep{2, {0.0, 0.2}}, VanishStep{4}};
            cfg.notes = "sub-concept 2 (class 0) shifts up by 0.2; sub-concept 4 (class 1) vanishes";
            break;
        default:
            throw std::invalid_argument("unknown case id " + std::to_string(case_id) +
                                        " (expected 1, 2 or 3)");
    }
    return cfg;
}

SampleWindow sample_window(const std::vector<SubConcept>& scenario, std::size_t n,
                           std::uint64_t seed, WindowTag tag) {
    validate_scenario(scenario);
    if (n == 0) {
        throw std::invalid_argument("sample_window: n must be >= 1");
    }
    const std::size_t d = scenario.front().mean.size();
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& c : scenario) {
        total += c.weight;
        cumulative.push_back(total);
    }

    Rng rng(seed);
    SampleWindow w;
    w.tag = tag;
    w.features = Matrix(n, d);
    w.labels.resize(n);
    w.subconcept_ids.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        auto pos = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        pos = std::min(pos, scenario.size() - 1);
        const SubConcept& c = scenario[pos];
        for (std::size_t k = 0; k < d; ++k) {
            w.features(i, k) = std::clamp(c.mean[k] + c.stddev[k] * rng.normal(), 0.0, 1.0);
        }
        w.labels[i] = c.label;
        (*w.subconcept_ids)[i] = c.id;
    }
    return w;
}

std::vector<SubConcept> apply_drift(const std::vector<SubConcept>& scenario,
                                    const DriftSpec& drift) {
    validate_scenario(scenario);
    std::vector<SubConcept> out = scenario;
    double original_total = 0.0;
    for (const auto& c : out) original_total += c.weight;
    for (const auto& step : drift.steps) {
        std::visit(
            Overloaded{
                [&](const VanishStep& s) {
                    out.erase(find_id(out, s.id));
                    if (out.empty()) {
                        throw std::invalid_argument("vanish would remove the last sub-concept");
                    }
                },
                [&](const SwapLabelsStep& s) {
                    auto a = find_id(out, s.id_a);
                    auto b = find_id(out, s.id_b);
                    if (a->label == b->label) {
                        throw std::invalid_argument("swap_labels requires different labels");
                    }
                    std::swap(a->label, b->label);
                },
                [&](const ShiftStep& s) {
                    auto c = find_id(out, s.id);
                    if (s.delta.size() != c->mean.size()) {
                        throw std::invalid_argument("shift delta has wrong dimensionality");
                    }
                    for (std::size_t k = 0; k < s.delta.size(); ++k) {
                        c->mean[k] = std::clamp(c->mean[k] + s.delta[k], 0.0, 1.0);
                    }
                }},
            step);
    }
    // Survivors are rescaled to the original total weight, so relative
    // proportions are kept and label swaps stay involutive.
    double total = 0.0;
    for (const auto& c : out) total += c.weight;
    if (total != original_total) {
        for (auto& c : out) c.weight *= original_total / total;
    }
    return out;
}

std::pair<SampleWindow, SampleWindow> generate_windows(const ScenarioConfig& config) {
    auto post_scenario = apply_drift(config.subconcepts, config.drift);
    return {sample_window(config.subconcepts, config.n_per_window, derive_seed(config.seed, 1),
                          WindowTag::pre),
            sample_window(post_scenario, config.n_per_window, derive_seed(config.seed, 2),
                          WindowTag::post)};
}

// ---- structured text -------------------------------------------------------

nlohmann::json scenario_to_json(const ScenarioConfig& config) {
    nlohmann::json j = config.extra.is_object() ? config.extra : nlohmann::json::object();
    j["format_version"] = kScenarioFormatVersion;
    j["name"] = config.name;
    j["n_per_window"] = config.n_per_window;
    j["seed"] = config.seed;
    j["notes"] = config.notes;
    j["rng"] = "mt19937_64 + Box-Muller";
    auto& subs = j["subconcepts"] = nlohmann::json::array();
    for (const auto& c : config.subconcepts) {
        subs.push_back({{"id", c.id},
                        {"label", c.label},
                        {"weight", c.weight},
                        {"mean", c.mean},
                        {"stddev", c.stddev}});
    }
    auto& steps = j["drift"]["steps"] = nlohmann::json::array();
    for (const auto& step : config.drift.steps) {
        steps.push_back(std::visit(
            Overloaded{[](const VanishStep& s) {
                           return nlohmann::json{{"kind", "vanish"}, {"id", s.id}};
                       },
                       [](const SwapLabelsStep& s) {
                           return nlohmann::json{{"kind", "swap_labels"},
                                                 {"ids", {s.id_a, s.id_b}}};
                       },
                       [](const ShiftStep& s) {
                           return nlohmann::json{
                               {"kind", "shift"}, {"id", s.id}, {"delta", s.delta}};
                       }},
            step));
    }
    j["drift"]["kind"] = config.drift.kind();
    return j;
}

ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format_version", 0) != kScenarioFormatVersion) {
            throw std::invalid_argument("unsupported scenario format_version");
        }
        ScenarioConfig cfg;
        cfg.name = j.value("name", "custom");
        cfg.n_per_window = j.value("n_per_window", std::size_t{1000});
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.notes = j.value("notes", "");
        for (const auto& s : j.at("subconcepts")) {
            SubConcept c;
            c.id = s.at("id").get<int>();
            c.label = s.at("label").get<int>();
            c.weight = s.value("weight", 1.0);
            c.mean = s.at("mean").get<Vector>();
            if (s.contains("stddev")) {
                c.stddev = s.at("stddev").get<Vector>();
            } else {
                c.stddev.assign(c.mean.size(), s.value("sigma", kDefaultSigma));
            }
            cfg.subconcepts.push_back(std::move(c));
        }
        if (j.contains("drift")) {
            for (const auto& s : j.at("drift").value("steps", nlohmann::json::array())) {
                const auto kind = s.at("kind").get<std::string>();
                if (kind == "vanish") {
                    cfg.drift.steps.emplace_back(VanishStep{s.at("id").get<int>()});
                } else if (kind == "swap_labels") {
                    const auto ids = s.at("ids").get<std::vector<int>>();
                    if (ids.size() != 2) {
                        throw std::invalid_argument("swap_labels needs exactly two ids");
                    }
                    cfg.drift.steps.emplace_back(SwapLabelsStep{ids[0], ids[1]});
                } else if (kind == "shift") {
                    cfg.drift.steps.emplace_back(
                        ShiftStep{s.at("id").get<int>(), s.at("delta").get<Vector>()});
                } else {
                    throw std::invalid_argument("unknown drift step kind: " + kind);
                }
            }
        }
        for (const auto& key : {"classifier", "explainer", "analysis", "case"}) {
            if (j.contains(key)) cfg.extra[key] = j.at(key);
        }
        validate_scenario(cfg.subconcepts);
        // Dry-run the drift so invalid references fail at load time.
        (void)apply_drift(cfg.subconcepts, cfg.drift);
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed scenario config: ") + e.what());
    }
}

void write_scenario(const ScenarioConfig& config, const std::filesystem::path& path) {
    write_text_file(path, scenario_to_json(config).dump(2) + "\n");
}

ScenarioConfig read_scenario(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return scenario_from_json(j);
}

// ---- CSV ------------------------------------------------------------------

std::string window_to_csv(const SampleWindow& window) {
    window.validate();
    std::string out;
    for (std::size_t k = 0; k < window.dim(); ++k) {
        out += "x" + std::to_string(k + 1) + ",";
    }
    out += "label";
    if (window.subconcept_ids) out += ",subconcept";
    out += "\n";
    for (std::size_t i = 0; i < window.size(); ++i) {
        for (std::size_t k = 0; k < window.dim(); ++k) {
            out += format_double(window.features(i, k));
            out += ",";
        }
        out += std::to_string(window.labels[i]);
        if (window.subconcept_ids) {
            out += "," + std::to_string((*window.subconcept_ids)[i]);
        }
        out += "\n";
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument("CSV line " + std::to_string(line_no) +
                                    ": not a number: '" + s + "'");
    }
    return v;
}

int parse_int(const std::string& s, std::size_t line_no) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument("CSV line " + std::to_string(line_no) +
                                    ": not an integer: '" + s + "'");
    }
    return v;
}

}  // namespace

SampleWindow window_from_csv(const std::string& text, WindowTag tag) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("CSV is empty");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    std::size_t d = 0;
    while (d < header.size() && header[d] == "x" + std::to_string(d + 1)) ++d;
    if (d == 0 || d >= header.size() || header[d] != "label") {
        throw std::invalid_argument("CSV header must be x1,...,xd,label[,subconcept]");
    }
    const bool has_ids = header.size() == d + 2 && header[d + 1] == "subconcept";
    if (header.size() != d + 1 && !has_ids) {
        throw std::invalid_argument("CSV header has unexpected columns");
    }

    SampleWindow w;
    w.tag = tag;
    w.features = Matrix(0, d);
    if (has_ids) w.subconcept_ids.emplace();
    std::size_t line_no = 1;
    Vector row(d);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw std::invalid_argument("CSV line " + std::to_string(line_no) +
                                        ": wrong number of fields");
        }
        for (std::size_t k = 0; k < d; ++k) row[k] = parse_double(cells[k], line_no);
        w.features.append_row(row);
        w.labels.push_back(parse_int(cells[d], line_no));
        if (has_ids) w.subconcept_ids->push_back(parse_int(cells[d + 1], line_no));
    }
    w.validate();
    return w;
}

void write_window_csv(const SampleWindow& window, const std::filesystem::path& path) {
    write_text_file(path, window_to_csv(window));
}

SampleWindow read_window_csv(const std::filesystem::path& path, WindowTag tag) {
    return window_from_csv(read_text_file(path), tag);
}

std::uint64_t window_hash(const SampleWindow& window) {
    Fnv1a h;
    h.update(static_cast<std::int64_t>(window.size()));
    h.update(static_cast<std::int64_t>(window.dim()));
    h.update(std::span<const double>(window.features.data()));
    for (int y : window.labels) h.update(static_cast<std::int64_t>(y));
    return h.digest();
}

}  // namespace driftgce

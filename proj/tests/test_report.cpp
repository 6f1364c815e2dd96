#include <doctest.h>

#include <cstdlib>
#include <map>
#include <regex>

#include "driftgce/io.hpp"
#include "driftgce/pipeline.hpp"
#include "driftgce/rng.hpp"
#include "driftgce/svg.hpp"

using namespace driftgce;
using nlohmann::json;

namespace {

using Attrs = std::map<std::string, std::string>;

// data-* attributes of every element carrying data-value.
std::vector<Attrs> data_elements(const std::string& svg) {
    static const std::regex tag(R"(<[a-z]+([^>]*)>)");
    static const std::regex attr(R"re( data-([a-z-]+)="([^"]*)")re");
    std::vector<Attrs> out;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), tag); it != std::sregex_iterator();
         ++it) {
        const std::string body = (*it)[1];
        Attrs a;
        for (auto jt = std::sregex_iterator(body.begin(), body.end(), attr);
             jt != std::sregex_iterator(); ++jt) {
            a[(*jt)[1]] = (*jt)[2];
        }
        if (a.count("value")) out.push_back(a);
    }
    return out;
}

double value(const Attrs& a) { return std::strtod(a.at("value").c_str(), nullptr); }

const json* find_key(const json& arr, const std::string& key, const char* field) {
    for (const auto& e : arr) {
        if (e.at(field).get<std::string>() == key) return &e;
    }
    return nullptr;
}

struct Fixture {
    PipelineResult result;
    json report;
};

const Fixture& case3() {
    static const Fixture f = [] {
        auto r = run_pipeline(resolve_pipeline_config(build_case(3, 1000, 7)));
        auto j = report_to_json(r.report);
        return Fixture{std::move(r), std::move(j)};
    }();
    return f;
}

SvgOptions fixed() {
    SvgOptions o;
    o.timestamp = false;
    return o;
}

}  // namespace

TEST_CASE("panel a shows the report CFAVs exactly") {
    const auto& f = case3();
    const auto& ex = f.report["explanation_layer"];
    const auto elements = data_elements(render_panel_a(f.report, fixed()));
    REQUIRE_FALSE(elements.empty());
    std::size_t expected = 0;
    for (const auto& c : ex["changes"]) {
        (void)c;
        expected += 2 * f.report["dim"].get<std::size_t>();
    }
    CHECK(elements.size() == expected);
    for (const auto& e : elements) {
        const auto& groups = e.at("window") == "pre" ? ex["groups_pre"] : ex["groups_post"];
        const json* g = find_key(groups, e.at("group"), "key");
        REQUIRE(g != nullptr);
        const int feature = std::stoi(e.at("feature").substr(1)) - 1;
        CHECK(value(e) == (*g)["cfav"][feature].get<double>());
    }
}

TEST_CASE("panel b shows local and global d_mae exactly") {
    const auto& f = case3();
    const std::string svg = render_panel_b(f.report, fixed());
    const auto elements = data_elements(svg);
    std::size_t pairs = 0;
    for (const auto& e : elements) {
        if (!e.count("pair")) continue;
        ++pairs;
        const json* l = find_key(f.report["model_layer"]["local"], e.at("pair"), "pre_key");
        REQUIRE(l != nullptr);
        CHECK(value(e) == (*l)["dmae"].get<double>());
    }
    CHECK(pairs == f.report["explanation_layer"]["matching"]["pairs"].size());
    const std::regex global(R"re(data-global-dmae="([^"]*)")re");
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, global));
    CHECK(std::strtod(m[1].str().c_str(), nullptr) ==
          f.report["model_layer"]["global_dmae"].get<double>());
    for (const auto& key : f.report["explanation_layer"]["matching"]["disappeared"]) {
        CHECK(svg.find("data-disappeared=\"" + key.get<std::string>() + "\"") != std::string::npos);
    }
}

TEST_CASE("panel c shows the change metrics exactly") {
    const auto& f = case3();
    const std::string svg = render_panel_c(f.report, fixed());
    const auto elements = data_elements(svg);
    CHECK(elements.size() == 3 * f.report["explanation_layer"]["changes"].size());
    for (const auto& e : elements) {
        const json* c = find_key(f.report["explanation_layer"]["changes"], e.at("pair"), "pre_key");
        REQUIRE(c != nullptr);
        CHECK(value(e) == (*c)[e.at("metric")].get<double>());
        if (e.at("metric") == "centroid_direction_deg") {
            CHECK(std::strtod(e.at("shift").c_str(), nullptr) ==
                  (*c)["centroid_shift_norm"].get<double>());
        }
    }
    CHECK(svg.find("data-headline=\"combined\"") != std::string::npos);
}

TEST_CASE("panel d draws both windows") {
    const auto& f = case3();
    const auto d = render_panel_d(f.report, f.result.pre, f.result.post, fixed());
    REQUIRE(d.has_value());
    std::size_t arrows = 0;
    for (std::size_t at = d->find("marker-end"); at != std::string::npos;
         at = d->find("marker-end", at + 1)) {
        ++arrows;
    }
    CHECK(arrows == f.result.gce_pre.groups.size() + f.result.gce_post.groups.size());
    CHECK(d->find("<svg") == 0);
}

TEST_CASE("timestamps") {
    const auto& f = case3();
    CHECK(render_panel_b(f.report, fixed()) == render_panel_b(f.report, fixed()));
    CHECK(render_panel_b(f.report, fixed()).find("generated:") == std::string::npos);
    SvgOptions stamped;
    stamped.timestamp_text = "2000-01-01T00:00:00Z";
    CHECK(render_panel_c(f.report, stamped).find("<!-- generated: 2000-01-01T00:00:00Z -->") !=
          std::string::npos);
    CHECK(render_panel_a(f.report, SvgOptions{}).find("<!-- generated: ") != std::string::npos);
}

TEST_CASE("five-dimensional scenario: panels a-c only") {
    ScenarioConfig cfg;
    cfg.name = "five_dim";
    cfg.n_per_window = 300;
    cfg.seed = 3;
    const Vector sd(5, 0.05);
    cfg.subconcepts = {{1, 0, 1.0, {0.2, 0.2, 0.5, 0.5, 0.5}, sd},
                       {2, 0, 1.0, {0.2, 0.8, 0.5, 0.5, 0.5}, sd},
                       {3, 1, 1.0, {0.8, 0.2, 0.5, 0.5, 0.5}, sd},
                       {4, 1, 1.0, {0.8, 0.8, 0.5, 0.5, 0.5}, sd}};
    cfg.drift.steps = {VanishStep{4}};
    const auto r = run_pipeline(resolve_pipeline_config(cfg));
    const auto j = report_to_json(r.report);
    CHECK(j["dim"] == 5);
    CHECK_FALSE(render_panel_d(j, r.pre, r.post, fixed()).has_value());
    CHECK(render_panel_a(j, fixed()).find("x5") != std::string::npos);
    CHECK_NOTHROW(render_panel_b(j, fixed()));
    CHECK_NOTHROW(render_panel_c(j, fixed()));
}

TEST_CASE("pipeline configuration") {
    auto cfg = build_case(1, 500, 21);
    const auto base = resolve_pipeline_config(cfg);
    CHECK(base.train.seed == derive_seed(21, 10));
    CHECK(base.explain.seed == derive_seed(21, 20));

    cfg.extra["classifier"] = {{"architecture", "logistic"}, {"epochs", 40}};
    cfg.extra["explainer"] = {{"method", "wachter"}, {"k_max", 3}};
    cfg.extra["analysis"] = {{"no_model_change", 0.05}};
    const auto over = resolve_pipeline_config(cfg);
    CHECK(over.train.architecture == Architecture::logistic);
    CHECK(over.train.epochs == 40);
    CHECK(over.explain.base.method == CeMethod::wachter);
    CHECK(over.explain.k_max == 3);
    CHECK(over.thresholds.no_model_change == 0.05);

    const auto again = resolve_pipeline_config(resolved_scenario(over));
    CHECK(to_json(again.train) == to_json(over.train));
    CHECK(explain_options_to_json(again.explain) == explain_options_to_json(over.explain));
    CHECK(to_json(again.thresholds) == to_json(over.thresholds));

    cfg.extra["classifier"] = {{"epochs", 0}};
    try {
        run_pipeline(resolve_pipeline_config(cfg));
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "train");
        CHECK(std::string(e.what()).rfind("[train] ", 0) == 0);
    } catch (const std::exception&) {
        // rejected while resolving, also acceptable
    }
}

TEST_CASE("pipeline is deterministic") {
    const auto cfg = resolve_pipeline_config(build_case(2, 400, 5));
    const auto a = run_pipeline(cfg);
    const auto b = run_pipeline(cfg);
    CHECK(report_document(a.report) == report_document(b.report));
    CHECK(render_panel_c(report_to_json(a.report), fixed()) ==
          render_panel_c(report_to_json(b.report), fixed()));
}

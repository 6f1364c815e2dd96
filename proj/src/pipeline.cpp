#include "driftgce/pipeline.hpp"

#include "driftgce/rng.hpp"

namespace driftgce {

nlohmann::json explain_options_to_json(const ExplainOptions& o) {
    nlohmann::json wachter = {{"lambda", o.base.wachter.lambda},
                              {"step_size", o.base.wachter.step_size},
                              {"max_iterations", o.base.wachter.max_iterations}};
    nlohmann::json face = {{"k_neighbors", o.base.face.k_neighbors},
                           {"bandwidth", o.base.face.bandwidth},
                           {"density_floor", o.base.face.density_floor},
                           {"bridge_components", o.base.face.bridge_components},
                           {"target_density_quantile", o.base.face.target_density_quantile}};
    return {{"method", to_string(o.base.method)},
            {"fallback_to_wachter", o.base.fallback_to_wachter},
            {"k_max", o.k_max},
            {"seed", o.seed},
            {"wachter", wachter},
            {"face", face}};
}

ExplainOptions explain_options_from_json(const nlohmann::json& j, ExplainOptions o) {
    if (j.contains("method")) o.base.method = ce_method_from_string(j.at("method").get<std::string>());
    o.base.fallback_to_wachter = j.value("fallback_to_wachter", o.base.fallback_to_wachter);
    o.k_max = j.value("k_max", o.k_max);
    o.seed = j.value("seed", o.seed);
    if (j.contains("wachter")) {
        const auto& w = j.at("wachter");
        o.base.wachter.lambda = w.value("lambda", o.base.wachter.lambda);
        o.base.wachter.step_size = w.value("step_size", o.base.wachter.step_size);
        o.base.wachter.max_iterations = w.value("max_iterations", o.base.wachter.max_iterations);
    }
    if (j.contains("face")) {
        const auto& f = j.at("face");
        o.base.face.k_neighbors = f.value("k_neighbors", o.base.face.k_neighbors);
        o.base.face.bandwidth = f.value("bandwidth", o.base.face.bandwidth);
        o.base.face.density_floor = f.value("density_floor", o.base.face.density_floor);
        o.base.face.bridge_components = f.value("bridge_components", o.base.face.bridge_components);
        o.base.face.target_density_quantile =
            f.value("target_density_quantile", o.base.face.target_density_quantile);
    }
    if (o.k_max == 0) throw std::invalid_argument("explainer: k_max must be >= 1");
    if (o.base.face.bandwidth <= 0.0) throw std::invalid_argument("explainer: bandwidth must be > 0");
    return o;
}

PipelineConfig resolve_pipeline_config(const ScenarioConfig& scenario) {
    PipelineConfig c;
    c.scenario = scenario;
    c.train.seed = derive_seed(scenario.seed, 10);
    c.explain.seed = derive_seed(scenario.seed, 20);
    const auto& extra = scenario.extra;
    if (extra.contains("classifier")) c.train = train_config_from_json(extra.at("classifier"), c.train);
    if (extra.contains("explainer")) c.explain = explain_options_from_json(extra.at("explainer"), c.explain);
    if (extra.contains("analysis")) c.thresholds = analysis_thresholds_from_json(extra.at("analysis"));
    c.train.validate();
    return c;
}

ScenarioConfig resolved_scenario(const PipelineConfig& config) {
    ScenarioConfig s = config.scenario;
    s.extra["classifier"] = to_json(config.train);
    s.extra["explainer"] = explain_options_to_json(config.explain);
    s.extra["analysis"] = to_json(config.thresholds);
    return s;
}

namespace {

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
    auto [pre, post] = stage("generate", [&] { return generate_windows(config.scenario); });
    Classifier h_pre = stage("train", [&] { return train(pre, config.train); });
    Classifier h_post = stage("train", [&] { return train(post, config.train); });
    GceModel gce_pre = stage("explain", [&] { return explain_window(h_pre, pre, config.explain); });
    GceModel gce_post = stage("explain", [&] { return explain_window(h_post, post, config.explain); });
    DriftReport report = stage("analyze", [&] {
        return build_report({pre, post, h_pre, h_post, gce_pre, gce_post, config.scenario.name},
                            config.thresholds);
    });
    return {std::move(pre),     std::move(post),     std::move(h_pre),   std::move(h_post),
            std::move(gce_pre), std::move(gce_post), std::move(report)};
}

}  // namespace driftgce

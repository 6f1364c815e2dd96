#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "driftgce/classifier.hpp"
#include "driftgce/drift.hpp"
#include "driftgce/glance.hpp"
#include "driftgce/scenario.hpp"

namespace driftgce {

struct PipelineConfig {
    ScenarioConfig scenario;
    TrainConfig train;
    ExplainOptions explain;
    AnalysisThresholds thresholds;
};

/// Seeds of every stage follow from scenario.seed; the "classifier",
/// "explainer" and "analysis" keys of scenario.extra override the defaults.
PipelineConfig resolve_pipeline_config(const ScenarioConfig& scenario);

nlohmann::json explain_options_to_json(const ExplainOptions& o);
ExplainOptions explain_options_from_json(const nlohmann::json& j, ExplainOptions base = {});

/// The resolved config as a scenario document (all overrides written out).
ScenarioConfig resolved_scenario(const PipelineConfig& config);

struct PipelineResult {
    SampleWindow pre;
    SampleWindow post;
    Classifier h_pre;
    Classifier h_post;
    GceModel gce_pre;
    GceModel gce_post;
    DriftReport report;
};

/// Generate, train both models from scratch with the same config, explain
/// both windows, analyze. Failures carry the stage name (StageError).
PipelineResult run_pipeline(const PipelineConfig& config);

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace driftgce

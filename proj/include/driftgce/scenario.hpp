#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "driftgce/linalg.hpp"

namespace driftgce {

/// One Gaussian mode of a class distribution. Features live in [0,1]^d.
struct SubConcept {
    int id = 0;
    int label = 0;
    double weight = 1.0;
    Vector mean;
    Vector stddev;  // diagonal, per feature

    bool operator==(const SubConcept&) const = default;
};

struct VanishStep {
    int id = 0;
    bool operator==(const VanishStep&) const = default;
};
struct SwapLabelsStep {
    int id_a = 0;
    int id_b = 0;
    bool operator==(const SwapLabelsStep&) const = default;
};
struct ShiftStep {
    int id = 0;
    Vector delta;
    bool operator==(const ShiftStep&) const = default;
};

using DriftStep = std::variant<VanishStep, SwapLabelsStep, ShiftStep>;

/// A drift is an ordered list of steps; more than one step is "combined".
struct DriftSpec {
    std::vector<DriftStep> steps;

    std::string kind() const;
    bool operator==(const DriftSpec&) const = default;
};

enum class WindowTag { pre, post };

std::string to_string(WindowTag tag);
WindowTag window_tag_from_string(const std::string& s);

struct SampleWindow {
    Matrix features;
    std::vector<int> labels;
    std::optional<std::vector<int>> subconcept_ids;
    WindowTag tag = WindowTag::pre;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    // Throws std::invalid_argument when lengths disagree or the window is empty.
    void validate() const;
};

/// Scenario plus everything needed to regenerate its windows.
struct ScenarioConfig {
    std::string name;
    std::vector<SubConcept> subconcepts;
    DriftSpec drift;
    std::size_t n_per_window = 1000;
    std::uint64_t seed = 0;
    std::string notes;
    // Extra top-level keys (classifier/explainer/analysis overrides) kept
    // verbatim so the config file can be shared with the pipeline.
    nlohmann::json extra = nlohmann::json::object();
};

inline constexpr int kScenarioFormatVersion = 1;
inline constexpr double kDefaultSigma = 0.05;

/// Checks sub-concept invariants (means in [0,1], stddev > 0, weight > 0,
/// unique ids, uniform dimension). Throws std::invalid_argument.
void validate_scenario(const std::vector<SubConcept>& scenario);

/// Built-in case studies 1 (vanishing sub-concept), 2 (label swap) and
/// 3 (shift + vanish). Throws std::invalid_argument for other ids or
/// n_per_window < 200.
ScenarioConfig build_case(int case_id, std::size_t n_per_window, std::uint64_t seed);

/// Draws n samples: sub-concept by weight, then its Gaussian, clamped to [0,1].
SampleWindow sample_window(const std::vector<SubConcept>& scenario, std::size_t n,
                           std::uint64_t seed, WindowTag tag);

/// Pure; the input scenario is not modified.
std::vector<SubConcept> apply_drift(const std::vector<SubConcept>& scenario,
                                    const DriftSpec& drift);

/// Pre and post windows of a config, using independent derived seeds.
std::pair<SampleWindow, SampleWindow> generate_windows(const ScenarioConfig& config);

// Structured-text (JSON) scenario config.
nlohmann::json scenario_to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
void write_scenario(const ScenarioConfig& config, const std::filesystem::path& path);
ScenarioConfig read_scenario(const std::filesystem::path& path);

// CSV: header x1,...,xd,label[,subconcept]
std::string window_to_csv(const SampleWindow& window);
SampleWindow window_from_csv(const std::string& text, WindowTag tag);
void write_window_csv(const SampleWindow& window, const std::filesystem::path& path);
SampleWindow read_window_csv(const std::filesystem::path& path, WindowTag tag);

std::uint64_t window_hash(const SampleWindow& window);

}  // namespace driftgce

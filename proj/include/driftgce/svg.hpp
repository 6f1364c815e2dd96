#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "driftgce/scenario.hpp"

namespace driftgce {

// Panels are pure functions of the report document. Every number shown is
// also written, unrounded, into a data-value attribute.
struct SvgOptions {
    // Adds a "<!-- generated: ... -->" line after the svg element. This is
    // the only part of a panel that varies between identical runs.
    bool timestamp = true;
    std::string timestamp_text;  // empty: current UTC time
};

/// (a) Pre/post CFAV components of every matched pair, by feature.
std::string render_panel_a(const nlohmann::json& report, const SvgOptions& options = {});

/// (b) Centroid map (first two features): matched pairs joined and labelled
/// with local d_mae, disappeared groups crossed out, appeared groups ringed.
std::string render_panel_b(const nlohmann::json& report, const SvgOptions& options = {});

/// (c) Per pair: CFAV Euclidean change, centroid displacement direction and
/// CFAV cosine.
std::string render_panel_c(const nlohmann::json& report, const SvgOptions& options = {});

/// (d) Scatter of both windows with group centroids and CFAV arrows. Only
/// for two-dimensional data; nullopt otherwise.
std::optional<std::string> render_panel_d(const nlohmann::json& report, const SampleWindow& pre,
                                          const SampleWindow& post,
                                          const SvgOptions& options = {});

}  // namespace driftgce

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "driftgce/drift.hpp"
#include "driftgce/scenario.hpp"

using namespace driftgce;

namespace {

std::vector<SubConcept> two_modes() {
    return {{1, 0, 1.0, {0.2, 0.2}, {0.05, 0.05}}, {2, 1, 1.0, {0.8, 0.8}, {0.05, 0.05}}};
}

void check_mean(const ClassMeansTable& t, WindowTag tag, int label, Vector expected,
                double tol) {
    const ClassMeans* m = t.get(tag, label);
    REQUIRE(m != nullptr);
    REQUIRE(m->mean.has_value());
    for (std::size_t k = 0; k < expected.size(); ++k) {
        CHECK(std::abs((*m->mean)[k] - expected[k]) <= tol);
    }
}

std::vector<Vector> sorted_means(const std::vector<SubConcept>& s) {
    std::vector<Vector> out;
    for (const auto& c : s) out.push_back(c.mean);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("case captions: per-class means") {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        {
            auto [pre, post] = generate_windows(build_case(1, 1000, seed));
            auto t = per_class_means(pre);
            t.merge(per_class_means(post));
            check_mean(t, WindowTag::pre, 0, {0.67, 0.5}, 0.05);
            check_mean(t, WindowTag::pre, 1, {0.15, 0.5}, 0.05);
            check_mean(t, WindowTag::post, 0, {0.67, 0.5}, 0.05);
            check_mean(t, WindowTag::post, 1, {0.1, 0.1}, 0.05);
        }
        {
            auto [pre, post] = generate_windows(build_case(2, 1000, seed));
            auto t = per_class_means(pre);
            check_mean(t, WindowTag::pre, 0, {0.5, 0.2}, 0.05);
            check_mean(t, WindowTag::pre, 1, {0.5, 0.8}, 0.05);
        }
        {
            auto [pre, post] = generate_windows(build_case(3, 1000, seed));
            auto t = per_class_means(pre);
            t.merge(per_class_means(post));
            check_mean(t, WindowTag::pre, 0, {0.5, 0.3}, 0.05);
            check_mean(t, WindowTag::pre, 1, {0.5, 0.7}, 0.05);
            check_mean(t, WindowTag::post, 0, {0.5, 0.4}, 0.05);
            check_mean(t, WindowTag::post, 1, {0.2, 0.7}, 0.05);
        }
    }
}

TEST_CASE("case drift kinds and guards") {
    CHECK(build_case(1, 1000, 0).drift.kind() == "vanish");
    CHECK(build_case(2, 1000, 0).drift.kind() == "swap_labels");
    CHECK(build_case(3, 1000, 0).drift.kind() == "combined");
    CHECK_THROWS_AS(build_case(4, 1000, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_case(0, 1000, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_case(1, 199, 0), std::invalid_argument);
    for (int c = 1; c <= 3; ++c) {
        const auto cfg = build_case(c, 1000, 0);
        CHECK(cfg.subconcepts.size() == 4);
        for (int label = 0; label < 2; ++label) {
            CHECK(std::count_if(cfg.subconcepts.begin(), cfg.subconcepts.end(),
                                [&](const SubConcept& s) { return s.label == label; }) == 2);
        }
        CHECK_FALSE(cfg.notes.empty());
    }
}

TEST_CASE("case 2 swap only relabels") {
    const auto cfg = build_case(2, 1000, 0);
    const auto post = apply_drift(cfg.subconcepts, cfg.drift);
    CHECK(sorted_means(post) == sorted_means(cfg.subconcepts));
    const auto& swap = std::get<SwapLabelsStep>(cfg.drift.steps.front());
    for (const auto& before : cfg.subconcepts) {
        auto after = std::find_if(post.begin(), post.end(),
                                  [&](const SubConcept& s) { return s.id == before.id; });
        REQUIRE(after != post.end());
        const bool swapped = before.id == swap.id_a || before.id == swap.id_b;
        CHECK((after->label != before.label) == swapped);
        CHECK(after->mean == before.mean);
    }
}

TEST_CASE("sample_window") {
    const auto s = two_modes();
    const auto w = sample_window(s, 10000, 1, WindowTag::pre);
    CHECK(w.size() == 10000);
    CHECK(w.dim() == 2);
    REQUIRE(w.subconcept_ids.has_value());
    const auto ones = std::count(w.labels.begin(), w.labels.end(), 1);
    CHECK(std::abs(static_cast<double>(ones) - 5000.0) <= 250.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        for (double v : w.features.row(i)) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(w.labels[i] == ((*w.subconcept_ids)[i] == 2 ? 1 : 0));
    }

    // Unequal weights: 1:3 split.
    auto skewed = s;
    skewed[1].weight = 3.0;
    const auto w2 = sample_window(skewed, 10000, 2, WindowTag::pre);
    const auto ones2 = std::count(w2.labels.begin(), w2.labels.end(), 1);
    CHECK(std::abs(static_cast<double>(ones2) - 7500.0) <= 375.0);

    // Vanishing spread reproduces the means.
    auto tight = s;
    for (auto& c : tight) c.stddev = {1e-12, 1e-12};
    const auto w3 = sample_window(tight, 50, 3, WindowTag::pre);
    for (std::size_t i = 0; i < w3.size(); ++i) {
        const Vector& m = tight[(*w3.subconcept_ids)[i] - 1].mean;
        CHECK(w3.features(i, 0) == doctest::Approx(m[0]).epsilon(1e-9));
        CHECK(w3.features(i, 1) == doctest::Approx(m[1]).epsilon(1e-9));
    }

    CHECK(sample_window(s, 100, 5, WindowTag::pre).features ==
          sample_window(s, 100, 5, WindowTag::pre).features);
    CHECK_FALSE(sample_window(s, 100, 5, WindowTag::pre).features ==
                sample_window(s, 100, 6, WindowTag::pre).features);
    CHECK_THROWS_AS(sample_window({}, 100, 1, WindowTag::pre), std::invalid_argument);
}

TEST_CASE("scenario validation") {
    auto s = two_modes();
    s[0].mean = {1.5, 0.2};
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
    s = two_modes();
    s[0].stddev = {0.0, 0.05};
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
    s = two_modes();
    s[1].id = 1;
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
    s = two_modes();
    s[1].mean = {0.5};
    s[1].stddev = {0.05};
    CHECK_THROWS_AS(validate_scenario(s), std::invalid_argument);
}

TEST_CASE("apply_drift steps") {
    std::vector<SubConcept> s = {{1, 0, 1.0, {0.5, 0.5}, {0.05, 0.05}},
                                 {2, 0, 1.0, {0.1, 0.1}, {0.05, 0.05}},
                                 {3, 1, 2.0, {0.9, 0.9}, {0.05, 0.05}}};
    const auto copy = s;

    const auto vanished = apply_drift(s, {{VanishStep{2}}});
    CHECK(s == copy);
    REQUIRE(vanished.size() == 2);
    CHECK(std::none_of(vanished.begin(), vanished.end(),
                       [](const SubConcept& c) { return c.id == 2; }));
    CHECK(vanished[1].weight / vanished[0].weight == doctest::Approx(2.0));

    const auto shifted = apply_drift(s, {{ShiftStep{1, {0.0, -0.4}}}});
    CHECK(shifted[0].mean[0] == doctest::Approx(0.5));
    CHECK(shifted[0].mean[1] == doctest::Approx(0.1));
    CHECK(apply_drift(s, {{ShiftStep{3, {0.5, 0.0}}}})[2].mean[0] == 1.0);

    const auto once = apply_drift(s, {{SwapLabelsStep{1, 3}}});
    CHECK(once[0].label == 1);
    CHECK(once[2].label == 0);
    CHECK(apply_drift(once, {{SwapLabelsStep{1, 3}}}) == s);

    CHECK(apply_drift(s, {}) == s);
    CHECK_THROWS_AS(apply_drift(s, {{VanishStep{9}}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_drift(s, {{SwapLabelsStep{1, 2}}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_drift(s, {{ShiftStep{1, {0.1}}}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_drift({s[0]}, {{VanishStep{1}}}), std::invalid_argument);
}

TEST_CASE("window tag strings") {
    CHECK(to_string(WindowTag::pre) == "pre");
    CHECK(window_tag_from_string("post") == WindowTag::post);
    CHECK_THROWS(window_tag_from_string("other"));
}

TEST_CASE("scenario json round trip") {
    auto cfg = build_case(3, 500, 42);
    cfg.extra["classifier"] = {{"epochs", 10}};
    const auto back = scenario_from_json(scenario_to_json(cfg));
    CHECK(back.name == cfg.name);
    CHECK(back.subconcepts == cfg.subconcepts);
    CHECK(back.drift == cfg.drift);
    CHECK(back.n_per_window == 500);
    CHECK(back.seed == 42);
    CHECK(back.extra["classifier"]["epochs"] == 10);

    const auto path = std::filesystem::temp_directory_path() / "driftgce_scenario_test.json";
    write_scenario(cfg, path);
    CHECK(read_scenario(path).subconcepts == cfg.subconcepts);
    std::filesystem::remove(path);

    auto j = scenario_to_json(cfg);
    j["format_version"] = 99;
    CHECK_THROWS(scenario_from_json(j));
    j = scenario_to_json(cfg);
    j["drift"]["steps"][0]["id"] = 77;
    CHECK_THROWS(scenario_from_json(j));
}

TEST_CASE("window csv round trip") {
    const auto w = sample_window(two_modes(), 300, 4, WindowTag::pre);
    const auto back = window_from_csv(window_to_csv(w), WindowTag::pre);
    CHECK(back.features == w.features);
    CHECK(back.labels == w.labels);
    CHECK(back.subconcept_ids == w.subconcept_ids);
    CHECK(window_hash(back) == window_hash(w));
    CHECK(window_to_csv(w).rfind("x1,x2,label,subconcept\n", 0) == 0);

    SampleWindow plain = w;
    plain.subconcept_ids.reset();
    const auto back2 = window_from_csv(window_to_csv(plain), WindowTag::post);
    CHECK_FALSE(back2.subconcept_ids.has_value());
    CHECK(back2.tag == WindowTag::post);

    CHECK_THROWS(window_from_csv("x1,x2,label\n0.1,0.2\n", WindowTag::pre));
    CHECK_THROWS(window_from_csv("x1,x2,label\n0.1,abc,1\n", WindowTag::pre));
    CHECK_THROWS(window_from_csv("x1,x2,label\n0.1,0.2,3\n", WindowTag::pre));
    CHECK_THROWS(window_from_csv("x1,x2,label\n", WindowTag::pre));
}

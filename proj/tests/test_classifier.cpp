#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "driftgce/classifier.hpp"
#include "driftgce/rng.hpp"

using namespace driftgce;

namespace {

Classifier random_model(Rng& rng, Architecture arch, std::size_t dim, std::size_t hidden,
                        double scale) {
    Vector p(Classifier::parameter_count(arch, dim, hidden));
    for (double& v : p) v = scale * rng.normal();
    return Classifier(arch, dim, hidden, p);
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

SampleWindow blobs(std::uint64_t seed) {
    return sample_window({{1, 0, 1.0, {0.25, 0.25}, {0.05, 0.05}},
                          {2, 1, 1.0, {0.75, 0.75}, {0.05, 0.05}}},
                         400, seed, WindowTag::pre);
}

}  // namespace

TEST_CASE("logistic closed forms") {
    const Classifier zero = Classifier::logistic({0.0, 0.0}, 0.0);
    CHECK(zero.predict_proba(Vector{0.3, 0.9}) == 0.5);
    CHECK(zero.predict(Vector{0.3, 0.9}) == 1);
    CHECK(zero.input_gradient(Vector{0.3, 0.9}) == Vector{0.0, 0.0});

    const Classifier m = Classifier::logistic({2.0, -1.0}, 0.5);
    const Vector x{0.3, 0.4};
    const double z = 2.0 * 0.3 - 0.4 + 0.5;
    const double p = 1.0 / (1.0 + std::exp(-z));
    CHECK(m.predict_proba(x) == doctest::Approx(p).epsilon(1e-14));
    const Vector g = m.input_gradient(x);
    CHECK(g[0] == doctest::Approx(p * (1 - p) * 2.0).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(p * (1 - p) * -1.0).epsilon(1e-14));

    CHECK(Classifier::logistic({0.0}, std::log(0.7 / 0.3)).predict(Vector{0.0}) == 1);
    CHECK(Classifier::logistic({0.0}, std::log(0.2 / 0.8)).predict(Vector{0.0}) == 0);
    CHECK(Classifier::logistic({0.0}, 800.0).predict_proba(Vector{0.0}) == 1.0);
    CHECK(Classifier::logistic({0.0}, -800.0).predict_proba(Vector{0.0}) == 0.0);

    CHECK_THROWS_AS(m.predict_proba(Vector{0.1}), DimensionError);
    CHECK_THROWS_AS(m.input_gradient(Vector{0.1, 0.2, 0.3}), DimensionError);
    CHECK_THROWS(Classifier(Architecture::mlp, 2, 3, Vector(4, 0.0)));
}

TEST_CASE("input gradient matches central differences") {
    Rng rng(17);
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto arch = trial % 2 ? Architecture::mlp : Architecture::logistic;
        const std::size_t dim = 1 + rng.index(4);
        const auto m = random_model(rng, arch, dim, 1 + rng.index(8), 1.0);
        Vector x(dim);
        for (double& v : x) v = rng.uniform();
        const Vector g = m.input_gradient(x);
        for (std::size_t k = 0; k < dim; ++k) {
            Vector a = x, b = x;
            a[k] += h;
            b[k] -= h;
            const double fd = (m.predict_proba(a) - m.predict_proba(b)) / (2 * h);
            if (std::abs(fd) < 1e-8 && std::abs(g[k]) < 1e-8) continue;
            worst = std::max(worst, relative_error(g[k], fd));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("parameter gradient matches central differences") {
    Rng rng(23);
    const auto w = blobs(1);
    std::vector<std::size_t> rows(w.size());
    std::iota(rows.begin(), rows.end(), 0);
    const double h = 1e-6;
    for (auto arch : {Architecture::logistic, Architecture::mlp}) {
        const auto base = random_model(rng, arch, 2, 5, 0.7);
        Vector grad(base.parameters().size());
        const double loss = base.loss_and_gradient(w.features, w.labels, rows, 0.01, grad);
        CHECK(loss == doctest::Approx(base.mean_loss(w.features, w.labels, 0.01)));
        for (std::size_t k = 0; k < grad.size(); ++k) {
            Classifier a = base, b = base;
            a.mutable_parameters()[k] += h;
            b.mutable_parameters()[k] -= h;
            const double fd = (a.mean_loss(w.features, w.labels, 0.01) -
                               b.mean_loss(w.features, w.labels, 0.01)) /
                              (2 * h);
            CHECK(relative_error(grad[k], fd) < 1e-4);
        }
    }
}

TEST_CASE("probabilities stay in [0,1] for extreme parameters") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto m = random_model(rng, Architecture::mlp, 2, 4, 200.0);
        const Vector x{rng.uniform(), rng.uniform()};
        const double p = m.predict_proba(x);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        CHECK(std::isfinite(m.logit(x)));
    }
}

TEST_CASE("training") {
    const auto w = blobs(2);
    for (auto arch : {Architecture::logistic, Architecture::mlp}) {
        TrainConfig cfg;
        cfg.architecture = arch;
        cfg.seed = 3;
        cfg.epochs = 100;
        const auto m = train(w, cfg);
        CHECK(m.accuracy(w.features, w.labels) >= 0.99);
        CHECK(m.predict_proba(Vector{0.75, 0.75}) > 0.9);
        CHECK(m.predict_proba(Vector{0.25, 0.25}) < 0.1);
        CHECK(train(w, cfg) == m);

        TrainConfig none = cfg;
        none.epochs = 1;
        none.learning_rate = 1e-12;
        const auto init = train(w, none);
        CHECK(m.mean_loss(w.features, w.labels, cfg.l2_penalty) <=
              init.mean_loss(w.features, w.labels, cfg.l2_penalty));
    }

    SampleWindow single = w;
    std::fill(single.labels.begin(), single.labels.end(), 1);
    CHECK_THROWS_AS(train(single, TrainConfig{}), std::invalid_argument);
    TrainConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(w, bad), std::invalid_argument);
    bad = TrainConfig{};
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(w, bad), std::invalid_argument);
    bad = TrainConfig{};
    bad.epochs = 0;
    CHECK_THROWS_AS(train(w, bad), std::invalid_argument);
}

TEST_CASE("case 2: pre model disagrees with post labels in the swapped regions") {
    const auto cfg = build_case(2, 1000, 7);
    const auto [pre, post] = generate_windows(cfg);
    TrainConfig tc;
    tc.seed = 1;
    const auto h = train(pre, tc);
    CHECK(h.accuracy(pre.features, pre.labels) >= 0.97);
    const double acc = h.accuracy(post.features, post.labels);
    CHECK(acc == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("model json round trip") {
    Rng rng(8);
    const auto m = random_model(rng, Architecture::mlp, 3, 6, 1.0);
    const auto j = model_to_json(m);
    const auto back = model_from_json(j);
    CHECK(back == m);
    CHECK(back.hash() == m.hash());

    auto tampered = j;
    tampered["parameters"][0] = tampered["parameters"][0].get<double>() + 1.0;
    CHECK_THROWS(model_from_json(tampered));
    auto wrong = j;
    wrong["format_version"] = 2;
    CHECK_THROWS(model_from_json(wrong));

    CHECK(architecture_from_string(to_string(Architecture::logistic)) == Architecture::logistic);
    CHECK_THROWS(architecture_from_string("forest"));

    TrainConfig c;
    c.epochs = 9;
    c.architecture = Architecture::logistic;
    const auto tc = train_config_from_json(to_json(c));
    CHECK(tc.epochs == 9);
    CHECK(tc.architecture == Architecture::logistic);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "driftgce/linalg.hpp"
#include "driftgce/scenario.hpp"

namespace driftgce {

enum class Architecture { logistic, mlp };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct TrainConfig {
    Architecture architecture = Architecture::mlp;
    std::size_t hidden_units = 16;
    double learning_rate = 0.05;
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double l2_penalty = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Binary probabilistic classifier: logistic regression or a one-hidden-layer
/// tanh MLP with a sigmoid output. Immutable after construction.
///
/// Parameter layout
///   logistic: [w_1..w_d, b]
///   mlp:      [W1 (hidden x d, row-major), b1 (hidden), w2 (hidden), b2]
class Classifier {
public:
    Classifier(Architecture arch, std::size_t dim, std::size_t hidden, Vector params);

    static Classifier logistic(Vector weights, double bias);

    Architecture architecture() const { return arch_; }
    std::size_t dim() const { return dim_; }
    std::size_t hidden_units() const { return hidden_; }
    const Vector& parameters() const { return params_; }

    static std::size_t parameter_count(Architecture arch, std::size_t dim, std::size_t hidden);

    /// Probability of class 1, in [0,1].
    double predict_proba(std::span<const double> x) const;
    /// 1 iff predict_proba(x) >= 0.5; the tie goes to class 1.
    int predict(std::span<const double> x) const;
    /// d predict_proba / dx.
    Vector input_gradient(std::span<const double> x) const;

    /// Pre-activation of the output unit.
    double logit(std::span<const double> x) const;

    /// Gradient of the mean cross-entropy (+ l2/2 * |params|^2 excluding biases)
    /// over the given rows; writes into grad and returns the loss.
    double loss_and_gradient(const Matrix& x, std::span<const int> y,
                             std::span<const std::size_t> rows, double l2,
                             std::span<double> grad) const;

    double mean_loss(const Matrix& x, std::span<const int> y, double l2) const;
    double accuracy(const Matrix& x, std::span<const int> y) const;

    std::span<double> mutable_parameters() { return params_; }

    std::uint64_t hash() const;

    bool operator==(const Classifier&) const = default;

private:
    Architecture arch_;
    std::size_t dim_;
    std::size_t hidden_;
    Vector params_;
};

inline constexpr int kModelFormatVersion = 1;

/// Minimizes cross-entropy by mini-batch gradient descent (Adam updates,
/// seeded shuffling and initialization). Throws std::invalid_argument for an
/// empty or single-class window.
Classifier train(const SampleWindow& window, const TrainConfig& config);

nlohmann::json model_to_json(const Classifier& model);
Classifier model_from_json(const nlohmann::json& j);
void write_model(const Classifier& model, const std::filesystem::path& path);
Classifier read_model(const std::filesystem::path& path);

}  // namespace driftgce

#include "driftgce/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "driftgce/io.hpp"
#include "driftgce/rng.hpp"

namespace driftgce {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

std::string to_string(Architecture a) { return a == Architecture::logistic ? "logistic" : "mlp"; }

Architecture architecture_from_string(const std::string& s) {
    if (s == "logistic") return Architecture::logistic;
    if (s == "mlp") return Architecture::mlp;
    throw std::invalid_argument("unknown architecture: " + s);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (epochs == 0) throw std::invalid_argument("epochs must be > 0");
    if (batch_size == 0) throw std::invalid_argument("batch size must be > 0");
    if (!(l2_penalty >= 0.0)) throw std::invalid_argument("l2 penalty must be >= 0");
    if (architecture == Architecture::mlp && hidden_units == 0) {
        throw std::invalid_argument("mlp needs at least one hidden unit");
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"architecture", to_string(c.architecture)},
            {"hidden_units", c.hidden_units},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"l2_penalty", c.l2_penalty},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
    if (j.contains("architecture"))
        base.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    base.hidden_units = j.value("hidden_units", base.hidden_units);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.epochs = j.value("epochs", base.epochs);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.l2_penalty = j.value("l2_penalty", base.l2_penalty);
    base.seed = j.value("seed", base.seed);
    base.validate();
    return base;
}

std::size_t Classifier::parameter_count(Architecture arch, std::size_t dim, std::size_t hidden) {
    return arch == Architecture::logistic ? dim + 1 : hidden * dim + hidden + hidden + 1;
}

Classifier::Classifier(Architecture arch, std::size_t dim, std::size_t hidden, Vector params)
    : arch_(arch), dim_(dim), hidden_(arch == Architecture::logistic ? 0 : hidden),
      params_(std::move(params)) {
    if (dim_ == 0) throw std::invalid_argument("classifier dimension must be > 0");
    if (arch_ == Architecture::mlp && hidden_ == 0) {
        throw std::invalid_argument("mlp needs at least one hidden unit");
    }
    if (params_.size() != parameter_count(arch_, dim_, hidden_)) {
        throw std::invalid_argument("classifier parameter vector has wrong length");
    }
    for (double p : params_) {
        if (!std::isfinite(p)) throw std::invalid_argument("classifier parameter is not finite");
    }
}

Classifier Classifier::logistic(Vector weights, double bias) {
    const std::size_t d = weights.size();
    weights.push_back(bias);
    return Classifier(Architecture::logistic, d, 0, std::move(weights));
}

double Classifier::logit(std::span<const double> x) const {
    require_same_dim(dim_, x.size(), "Classifier");
    const double* p = params_.data();
    if (arch_ == Architecture::logistic) {
        double z = p[dim_];
        for (std::size_t k = 0; k < dim_; ++k) z += p[k] * x[k];
        return z;
    }
    const double* w1 = p;
    const double* b1 = w1 + hidden_ * dim_;
    const double* w2 = b1 + hidden_;
    double z = w2[hidden_];
    for (std::size_t j = 0; j < hidden_; ++j) {
        double a = b1[j];
        for (std::size_t k = 0; k < dim_; ++k) a += w1[j * dim_ + k] * x[k];
        z += w2[j] * std::tanh(a);
    }
    return z;
}

double Classifier::predict_proba(std::span<const double> x) const { return sigmoid(logit(x)); }

int Classifier::predict(std::span<const double> x) const {
    return predict_proba(x) >= 0.5 ? 1 : 0;
}

Vector Classifier::input_gradient(std::span<const double> x) const {
    require_same_dim(dim_, x.size(), "Classifier::input_gradient");
    const double p = predict_proba(x);
    const double dp = p * (1.0 - p);
    Vector g(dim_, 0.0);
    if (arch_ == Architecture::logistic) {
        for (std::size_t k = 0; k < dim_; ++k) g[k] = dp * params_[k];
        return g;
    }
    const double* w1 = params_.data();
    const double* b1 = w1 + hidden_ * dim_;
    const double* w2 = b1 + hidden_;
    for (std::size_t j = 0; j < hidden_; ++j) {
        double a = b1[j];
        for (std::size_t k = 0; k < dim_; ++k) a += w1[j * dim_ + k] * x[k];
        const double t = std::tanh(a);
        const double coeff = dp * w2[j] * (1.0 - t * t);
        for (std::size_t k = 0; k < dim_; ++k) g[k] += coeff * w1[j * dim_ + k];
    }
    return g;
}

double Classifier::loss_and_gradient(const Matrix& x, std::span<const int> y,
                                     std::span<const std::size_t> rows, double l2,
                                     std::span<double> grad) const {
    require_same_dim(params_.size(), grad.size(), "loss_and_gradient");
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    std::vector<double> hidden(hidden_);
    const double* w1 = params_.data();
    const double* b1 = w1 + hidden_ * dim_;
    const double* w2 = b1 + hidden_;
    for (std::size_t r : rows) {
        auto xr = x.row(r);
        const double target = static_cast<double>(y[r]);
        if (arch_ == Architecture::logistic) {
            const double z = logit(xr);
            loss += softplus(z) - target * z;
            const double dz = sigmoid(z) - target;
            for (std::size_t k = 0; k < dim_; ++k) grad[k] += dz * xr[k];
            grad[dim_] += dz;
            continue;
        }
        double z = w2[hidden_];
        for (std::size_t j = 0; j < hidden_; ++j) {
            double a = b1[j];
            for (std::size_t k = 0; k < dim_; ++k) a += w1[j * dim_ + k] * xr[k];
            hidden[j] = std::tanh(a);
            z += w2[j] * hidden[j];
        }
        loss += softplus(z) - target * z;
        const double dz = sigmoid(z) - target;
        double* gw1 = grad.data();
        double* gb1 = gw1 + hidden_ * dim_;
        double* gw2 = gb1 + hidden_;
        for (std::size_t j = 0; j < hidden_; ++j) {
            gw2[j] += dz * hidden[j];
            const double delta = dz * w2[j] * (1.0 - hidden[j] * hidden[j]);
            gb1[j] += delta;
            for (std::size_t k = 0; k < dim_; ++k) gw1[j * dim_ + k] += delta * xr[k];
        }
        gw2[hidden_] += dz;
    }
    const double inv = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());
    loss *= inv;
    for (double& g : grad) g *= inv;

    // l2 on weights only
    auto penalize = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            loss += 0.5 * l2 * params_[i] * params_[i];
            grad[i] += l2 * params_[i];
        }
    };
    if (l2 > 0.0) {
        if (arch_ == Architecture::logistic) {
            penalize(0, dim_);
        } else {
            penalize(0, hidden_ * dim_);
            penalize(hidden_ * dim_ + hidden_, hidden_ * dim_ + 2 * hidden_);
        }
    }
    return loss;
}

double Classifier::mean_loss(const Matrix& x, std::span<const int> y, double l2) const {
    std::vector<std::size_t> rows(x.rows());
    std::iota(rows.begin(), rows.end(), 0);
    Vector grad(params_.size());
    return loss_and_gradient(x, y, rows, l2, grad);
}

double Classifier::accuracy(const Matrix& x, std::span<const int> y) const {
    if (x.rows() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        correct += predict(x.row(i)) == y[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(x.rows());
}

std::uint64_t Classifier::hash() const {
    Fnv1a h;
    h.update(to_string(arch_));
    h.update(static_cast<std::int64_t>(dim_));
    h.update(static_cast<std::int64_t>(hidden_));
    h.update(std::span<const double>(params_));
    return h.digest();
}

Classifier train(const SampleWindow& window, const TrainConfig& config) {
    window.validate();
    config.validate();
    std::set<int> classes(window.labels.begin(), window.labels.end());
    if (classes.size() < 2) {
        throw std::invalid_argument("train: window contains a single class");
    }
    const std::size_t d = window.dim();
    const std::size_t hidden = config.architecture == Architecture::mlp ? config.hidden_units : 0;
    Rng rng(derive_seed(config.seed, 0x7261696eULL));

    Vector params(Classifier::parameter_count(config.architecture, d, hidden), 0.0);
    if (config.architecture == Architecture::mlp) {
        const double a1 = std::sqrt(6.0 / static_cast<double>(d + hidden));
        for (std::size_t i = 0; i < hidden * d; ++i) params[i] = a1 * (2.0 * rng.uniform() - 1.0);
        const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
        for (std::size_t j = 0; j < hidden; ++j) {
            params[hidden * d + hidden + j] = a2 * (2.0 * rng.uniform() - 1.0);
        }
    }
    Classifier model(config.architecture, d, hidden, std::move(params));

    // Adam
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    const std::size_t np = model.parameters().size();
    Vector m(np, 0.0), v(np, 0.0), grad(np, 0.0);
    std::vector<std::size_t> order(window.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the portable generator
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::span<const std::size_t> batch(order.data() + start, end - start);
            model.loss_and_gradient(window.features, window.labels, batch, config.l2_penalty,
                                    grad);
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            auto p = model.mutable_parameters();
            for (std::size_t i = 0; i < np; ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        }
    }
    for (double p : model.parameters()) {
        if (!std::isfinite(p)) throw std::runtime_error("train: parameters diverged");
    }
    return model;
}

nlohmann::json model_to_json(const Classifier& model) {
    return {{"format_version", kModelFormatVersion},
            {"architecture", to_string(model.architecture())},
            {"dim", model.dim()},
            {"hidden_units", model.hidden_units()},
            {"activation", model.architecture() == Architecture::mlp ? "tanh" : "none"},
            {"parameters", model.parameters()},
            {"hash", hex_hash(model.hash())}};
}

Classifier model_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format_version", 0) != kModelFormatVersion) {
            throw std::invalid_argument("unsupported model format_version");
        }
        Classifier model(architecture_from_string(j.at("architecture").get<std::string>()),
                         j.at("dim").get<std::size_t>(), j.value("hidden_units", std::size_t{0}),
                         j.at("parameters").get<Vector>());
        if (j.contains("hash") && j.at("hash").get<std::string>() != hex_hash(model.hash())) {
            throw std::invalid_argument("model hash does not match its parameters");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed model file: ") + e.what());
    }
}

void write_model(const Classifier& model, const std::filesystem::path& path) {
    write_text_file(path, model_to_json(model).dump(2) + "\n");
}

Classifier read_model(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace driftgce

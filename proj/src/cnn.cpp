#include "hgm_ehr/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "hgm_ehr/kernels.hpp"
#include "hgm_ehr/rng.hpp"

namespace hgm_ehr {

namespace {

constexpr int kCheckpointVersion = 1;

kernels::ConvShape shape_of(const CnnParams& params, const FeatureMatrix& m) {
    if (m.features != params.features) {
        throw std::invalid_argument("cnn: matrix has " + std::to_string(m.features) + " features, model expects " +
                                    std::to_string(params.features));
    }
    if (m.time < params.kernel) {
        throw std::invalid_argument("cnn: " + std::to_string(m.time) + " time steps is shorter than kernel " +
                                    std::to_string(params.kernel));
    }
    return {m.time, m.features, params.n_filters, params.kernel};
}

void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace

CnnParams CnnParams::zeros(std::size_t n_filters, std::size_t kernel, std::size_t features) {
    CnnParams p;
    p.n_filters = n_filters;
    p.kernel = kernel;
    p.features = features;
    p.filters = Matrix(n_filters, kernel * features);
    p.conv_bias.assign(n_filters, 0.0);
    p.dense = Matrix(n_filters, 2);
    p.dense_bias.assign(2, 0.0);
    return p;
}

CnnParams CnnParams::init(std::size_t n_filters, std::size_t kernel, std::size_t features, std::uint64_t seed) {
    CnnParams p = zeros(n_filters, kernel, features);
    Rng rng(seed);
    const double conv_bound = std::sqrt(6.0 / static_cast<double>(kernel * features + n_filters));
    const double dense_bound = std::sqrt(6.0 / static_cast<double>(n_filters + 2));
    for (auto& w : p.filters.data) w = rng.uniform(-conv_bound, conv_bound);
    for (auto& w : p.dense.data) w = rng.uniform(-dense_bound, dense_bound);
    return p;
}

nlohmann::json CnnParams::to_json() const {
    return nlohmann::json{{"format", "hgm-ehr/cnn"},
                          {"version", kCheckpointVersion},
                          {"n_filters", n_filters},
                          {"kernel", kernel},
                          {"features", features},
                          {"filters", matrix_to_json(filters)},
                          {"conv_bias", conv_bias},
                          {"dense", matrix_to_json(dense)},
                          {"dense_bias", dense_bias}};
}

CnnParams CnnParams::from_json(const nlohmann::json& j) {
    if (j.at("format") != "hgm-ehr/cnn") throw std::invalid_argument("not a CNN checkpoint");
    if (j.at("version") != kCheckpointVersion) throw std::invalid_argument("unsupported CNN checkpoint version");
    CnnParams p;
    p.n_filters = j.at("n_filters").get<std::size_t>();
    p.kernel = j.at("kernel").get<std::size_t>();
    p.features = j.at("features").get<std::size_t>();
    p.filters = matrix_from_json(j.at("filters"));
    p.conv_bias = j.at("conv_bias").get<Vec>();
    p.dense = matrix_from_json(j.at("dense"));
    p.dense_bias = j.at("dense_bias").get<Vec>();
    if (p.filters.rows != p.n_filters || p.filters.cols != p.kernel * p.features ||
        p.conv_bias.size() != p.n_filters || p.dense.rows != p.n_filters || p.dense.cols != 2 ||
        p.dense_bias.size() != 2) {
        throw std::invalid_argument("CNN checkpoint: inconsistent dimensions");
    }
    return p;
}

void CnnParams::save(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw std::runtime_error(file.string() + ": cannot write file");
    out << to_json().dump() << '\n';
}

CnnParams CnnParams::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error(file.string() + ": cannot open file");
    return from_json(nlohmann::json::parse(in));
}

Probabilities softmax2(std::array<double, 2> logits) {
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    const double z = e0 + e1;
    return {e0 / z, e1 / z};
}

ForwardTrace forward_trace(const CnnParams& params, const FeatureMatrix& matrix) {
    const auto shape = shape_of(params, matrix);
    ForwardTrace tr;
    tr.conv = Matrix(params.n_filters, shape.out_time());
    kernels::omp::conv_forward(shape, matrix.values, params.filters, params.conv_bias, tr.conv);

    tr.pooled.assign(params.n_filters, 0.0);
    tr.argmax.assign(params.n_filters, 0);
    for (std::size_t f = 0; f < params.n_filters; ++f) {
        double best = std::max(tr.conv(f, 0), 0.0);
        std::size_t at = 0;
        for (std::size_t t = 1; t < shape.out_time(); ++t) {
            const double v = std::max(tr.conv(f, t), 0.0);
            if (v > best) {
                best = v;
                at = t;
            }
        }
        tr.pooled[f] = best;
        tr.argmax[f] = at;
    }
    for (std::size_t c = 0; c < 2; ++c) {
        double s = params.dense_bias[c];
        for (std::size_t f = 0; f < params.n_filters; ++f) s += params.dense(f, c) * tr.pooled[f];
        tr.logits[c] = s;
    }
    tr.probs = softmax2(tr.logits);
    return tr;
}

Probabilities forward(const CnnParams& params, const FeatureMatrix& matrix) {
    return forward_trace(params, matrix).probs;
}

double ce_loss(const Probabilities& probs, bool label) {
    return -std::log(std::max(probs[label ? 1 : 0], 1e-12));
}

CnnParams backward(const CnnParams& params, const FeatureMatrix& matrix, bool label, double weight) {
    return loss_and_backward(params, matrix, label, weight).grad;
}

CnnLossAndGrad loss_and_backward(const CnnParams& params, const FeatureMatrix& matrix, bool label,
                                 double weight) {
    const auto shape = shape_of(params, matrix);
    const ForwardTrace tr = forward_trace(params, matrix);
    CnnLossAndGrad out;
    out.loss = weight * ce_loss(tr.probs, label);
    out.grad = CnnParams::zeros(params.n_filters, params.kernel, params.features);
    CnnParams& g = out.grad;

    // d loss / d logits = weight * (p - onehot); no clamp inside the active range
    std::array<double, 2> dlogit{weight * tr.probs[0], weight * tr.probs[1]};
    dlogit[label ? 1 : 0] -= weight;

    Matrix dconv(params.n_filters, shape.out_time());
    for (std::size_t c = 0; c < 2; ++c) g.dense_bias[c] = dlogit[c];
    for (std::size_t f = 0; f < params.n_filters; ++f) {
        double dpool = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
            g.dense(f, c) = dlogit[c] * tr.pooled[f];
            dpool += dlogit[c] * params.dense(f, c);
        }
        // max-pool routes to the first argmax; ReLU passes only positive pre-activations
        const std::size_t t = tr.argmax[f];
        if (tr.conv(f, t) > 0.0) {
            dconv(f, t) = dpool;
            g.conv_bias[f] = dpool;
        }
    }
    kernels::omp::conv_filter_grad(shape, matrix.values, dconv, g.filters);
    return out;
}

double predict(const CnnParams& params, const FeatureMatrix& matrix) { return forward(params, matrix)[1]; }

void CnnConfig::validate() const {
    if (n_filters < 1 || kernel < 1 || batch < 1) {
        throw std::invalid_argument("cnn: filters, kernel and batch must be positive");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("cnn: learning_rate must be positive");
    if (!(weight_decay >= 0.0) || learning_rate * weight_decay >= 1.0) {
        throw std::invalid_argument("cnn: weight_decay must be non-negative and below 1 / learning_rate");
    }
}

CnnTrainResult train_cnn(std::span<const FeatureMatrix> examples, const CnnConfig& config) {
    config.validate();
    if (examples.empty()) throw std::invalid_argument("train_cnn: no training examples");
    const std::size_t n_pos = static_cast<std::size_t>(
        std::count_if(examples.begin(), examples.end(), [](const FeatureMatrix& m) { return m.label; }));
    if (n_pos == 0 || n_pos == examples.size()) {
        throw std::invalid_argument("train_cnn: training set must contain both classes");
    }
    const std::size_t features = examples.front().features;
    for (const auto& m : examples) {
        if (m.features != features) throw std::invalid_argument("train_cnn: inconsistent feature counts");
    }

    CnnTrainResult result;
    result.params = CnnParams::init(config.n_filters, config.kernel, features, derive_seed(config.seed, "cnn-init"));
    const double n = static_cast<double>(examples.size());
    std::array<double, 2> class_weight{1.0, 1.0};
    if (config.class_weights) {
        class_weight[1] = n / (2.0 * static_cast<double>(n_pos));
        class_weight[0] = n / (2.0 * static_cast<double>(examples.size() - n_pos));
    }

    Rng rng(derive_seed(config.seed, "cnn-order"));
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    CnnParams& p = result.params;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch) {
            const std::size_t end = std::min(order.size(), start + config.batch);
            CnnParams acc = CnnParams::zeros(p.n_filters, p.kernel, p.features);
            for (std::size_t b = start; b < end; ++b) {
                const FeatureMatrix& m = examples[order[b]];
                const double w = class_weight[m.label ? 1 : 0];
                CnnLossAndGrad lg = loss_and_backward(p, m, m.label, w);
                epoch_loss += lg.loss;
                const CnnParams& g = lg.grad;
                axpy(1.0, g.filters.data, acc.filters.data);
                axpy(1.0, g.conv_bias, acc.conv_bias);
                axpy(1.0, g.dense.data, acc.dense.data);
                axpy(1.0, g.dense_bias, acc.dense_bias);
            }
            if (config.weight_decay > 0.0) {
                const double decay = 1.0 - config.learning_rate * config.weight_decay;
                for (auto& w : p.filters.data) w *= decay;
                for (auto& w : p.dense.data) w *= decay;
            }
            const double step = -config.learning_rate / static_cast<double>(end - start);
            axpy(step, acc.filters.data, p.filters.data);
            axpy(step, acc.conv_bias, p.conv_bias);
            axpy(step, acc.dense.data, p.dense.data);
            axpy(step, acc.dense_bias, p.dense_bias);
        }
        result.epoch_loss.push_back(epoch_loss / n);
        spdlog::debug("train_cnn: epoch {} mean loss {:.6f}", epoch, result.epoch_loss.back());
    }
    return result;
}

}  // namespace hgm_ehr

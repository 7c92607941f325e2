#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hgm_ehr/features.hpp"
#include "hgm_ehr/tensor.hpp"

namespace hgm_ehr {

/// conv (full-height filters, valid along time) -> ReLU -> global max-pool
/// over time -> dense(2) -> softmax. Also used as the gradient container.
struct CnnParams {
    std::size_t n_filters = 0;
    std::size_t kernel = 0;
    std::size_t features = 0;
    Matrix filters;  // n_filters x (kernel * features)
    Vec conv_bias;   // n_filters
    Matrix dense;    // n_filters x 2
    Vec dense_bias;  // 2

    static CnnParams zeros(std::size_t n_filters, std::size_t kernel, std::size_t features);
    static CnnParams init(std::size_t n_filters, std::size_t kernel, std::size_t features, std::uint64_t seed);

    nlohmann::json to_json() const;
    static CnnParams from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& file) const;
    static CnnParams load(const std::filesystem::path& file);

    bool operator==(const CnnParams&) const = default;
};

using Probabilities = std::array<double, 2>;

struct ForwardTrace {
    Matrix conv;                     // pre-activation, n_filters x out_time
    Vec pooled;                      // max over time of ReLU(conv)
    std::vector<std::size_t> argmax;  // first index on ties
    std::array<double, 2> logits{};
    Probabilities probs{};
};

ForwardTrace forward_trace(const CnnParams& params, const FeatureMatrix& matrix);
Probabilities forward(const CnnParams& params, const FeatureMatrix& matrix);
Probabilities softmax2(std::array<double, 2> logits);

// -log p[label], with p clamped at 1e-12.
double ce_loss(const Probabilities& probs, bool label);

// Gradient of weight * ce_loss(forward(matrix), label).
CnnParams backward(const CnnParams& params, const FeatureMatrix& matrix, bool label, double weight = 1.0);

struct CnnLossAndGrad {
    double loss = 0.0;  // weighted
    CnnParams grad;
};
CnnLossAndGrad loss_and_backward(const CnnParams& params, const FeatureMatrix& matrix, bool label,
                                 double weight = 1.0);

double predict(const CnnParams& params, const FeatureMatrix& matrix);

struct CnnConfig {
    std::size_t n_filters = 32;
    std::size_t kernel = 3;
    std::size_t batch = 32;
    double learning_rate = 0.01;
    std::size_t epochs = 30;
    double weight_decay = 0.0;  // L2 on filter and dense weights, not biases
    bool class_weights = true;  // inverse-prevalence example weights
    std::uint64_t seed = 1;

    void validate() const;
};

struct CnnTrainResult {
    CnnParams params;
    std::vector<double> epoch_loss;
};

CnnTrainResult train_cnn(std::span<const FeatureMatrix> examples, const CnnConfig& config);

}  // namespace hgm_ehr

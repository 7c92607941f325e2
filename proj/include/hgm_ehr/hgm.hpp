#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hgm_ehr/graph.hpp"
#include "hgm_ehr/sampler.hpp"
#include "hgm_ehr/tensor.hpp"

namespace hgm_ehr {

enum class Activation : std::uint8_t { Tanh, Sigmoid, Relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Relation under which a neighbor is scored against a patient-hour center u:
//   Tested     (c_lab + r_ip) . u
//   Diagnosed  (u + r_pd) . c_diag
//   CoPatient  c_other . u
//   Temporal   (u + r_tt) . c_next
enum class Relation : std::uint8_t { Tested, Diagnosed, CoPatient, Temporal };

/// Projection matrices (dim x input size, row-major) and relation vectors.
/// Every patient-hour node goes through the same w_p.
struct HgmParams {
    std::size_t dim = 0;
    Activation activation = Activation::Tanh;
    Matrix w_p;
    Matrix w_i;
    Matrix w_d;
    Vec r_ip;
    Vec r_pd;
    Vec r_tt;

    // Entries uniform in [-0.5/dim, 0.5/dim].
    static HgmParams init(std::size_t dim, std::size_t patient_inputs, std::size_t n_labs,
                          std::size_t n_diagnoses, Activation activation, std::uint64_t seed);
    static HgmParams zeros(std::size_t dim, std::size_t patient_inputs, std::size_t n_labs,
                           std::size_t n_diagnoses, Activation activation);

    nlohmann::json to_json() const;
    static HgmParams from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& file) const;
    static HgmParams load(const std::filesystem::path& file);

    bool operator==(const HgmParams&) const = default;
};

Vec activate(Activation a, std::span<const double> pre);

// sigma(W x) with the projection matrix of `type`.
Vec project(const HgmParams& params, NodeType type, std::span<const double> raw);
Vec translate(std::span<const double> c, std::span<const double> relation);

double score(const HgmParams& params, std::span<const double> center_emb, Relation relation,
             std::span<const double> neighbor_emb);

// Embedding of a graph node: patient-hours project their lab vector, labs and
// diagnoses project their one-hot encoding.
Vec embed_node(const HgmParams& params, const HeteroGraph& graph, NodeId node);

// Full-softmax objective for one center, normalized over every other node in
// the graph. Only tractable on toy graphs.
double exact_softmax_loss(const HgmParams& params, const HeteroGraph& graph, NodeId center);

double ns_loss(const HgmParams& params, const HeteroGraph& graph, const ContextSample& context);

/// Gradient of ns_loss. Lab and diagnosis inputs are one-hot, so only the
/// touched columns of w_i / w_d are stored.
struct HgmGrad {
    Matrix w_p;
    std::map<std::uint32_t, Vec> w_i_cols;
    std::map<std::uint32_t, Vec> w_d_cols;
    Vec r_ip;
    Vec r_pd;
    Vec r_tt;

    // Same layout as the parameters, untouched entries zero.
    HgmParams dense(const HgmParams& like) const;
};

struct LossAndGrad {
    double loss = 0.0;
    HgmGrad grad;
};

LossAndGrad ns_loss_and_grad(const HgmParams& params, const HeteroGraph& graph, const ContextSample& context);
HgmGrad ns_grad(const HgmParams& params, const HeteroGraph& graph, const ContextSample& context);

void apply_gradient(HgmParams& params, const HgmGrad& grad, double learning_rate);

struct HgmTrainConfig {
    double learning_rate = 0.0025;
    double min_learning_rate = 1e-4;
    std::size_t epochs = 5;
    std::size_t dim = 128;
    Activation activation = Activation::Tanh;
    std::uint64_t seed = 1;
    SamplerConfig sampler;

    void validate() const;
};

struct HgmTrainResult {
    HgmParams params;
    std::vector<double> epoch_loss;  // mean ns_loss per trained center
    std::size_t skipped_centers = 0;
};

// SGD over epochs x all patient-hour centers, shuffled per epoch. The learning
// rate decays linearly from learning_rate to min_learning_rate.
HgmTrainResult train_hgm(const HeteroGraph& graph, const HgmTrainConfig& config);

// Observed hour: sigma(W_p x). Fully missing hour: previous + r_tt, or zeros
// when there is no previous hour.
Vec embed_patient_hour(const HgmParams& params, const HourSnapshot* snapshot, const Vec* previous);

}  // namespace hgm_ehr

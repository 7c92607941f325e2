#include "hgm_ehr/hgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "hgm_ehr/kernels.hpp"
#include "hgm_ehr/rng.hpp"

namespace hgm_ehr {

namespace {

constexpr int kCheckpointVersion = 1;

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// log(1 + e^x)
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double activation_derivative(Activation a, double pre, double out) {
    switch (a) {
        case Activation::Tanh:
            return 1.0 - out * out;
        case Activation::Sigmoid:
            return out * (1.0 - out);
        case Activation::Relu:
            return pre > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

const Matrix& projection_for(const HgmParams& params, NodeType type) {
    switch (type) {
        case NodeType::PatientHour:
            return params.w_p;
        case NodeType::Lab:
            return params.w_i;
        case NodeType::Diagnosis:
            return params.w_d;
    }
    throw std::logic_error("unknown node type");
}

Vec column(const Matrix& m, std::size_t c) {
    Vec out(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) out[r] = m(r, c);
    return out;
}

Relation relation_for(NodeType neighbor_type) {
    switch (neighbor_type) {
        case NodeType::Lab:
            return Relation::Tested;
        case NodeType::Diagnosis:
            return Relation::Diagnosed;
        case NodeType::PatientHour:
            return Relation::CoPatient;
    }
    throw std::logic_error("unknown node type");
}

Vec random_vec(std::size_t n, double bound, Rng& rng) {
    Vec v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return v;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& x : m.data) x = rng.uniform(-bound, bound);
    return m;
}

// Pre-activation and embedding of one node, plus the gradient flowing into
// the embedding during a backward pass.
struct NodeState {
    Vec pre;
    Vec emb;
    Vec grad;
};

class ContextEvaluator {
   public:
    ContextEvaluator(const HgmParams& params, const HeteroGraph& graph) : params_(params), graph_(graph) {}

    NodeState& state(NodeId node) {
        auto it = nodes_.find(node);
        if (it != nodes_.end()) return it->second;
        NodeState s;
        const std::size_t d = params_.dim;
        s.pre.assign(d, 0.0);
        switch (node.type) {
            case NodeType::PatientHour:
                kernels::omp::matvec(params_.w_p, graph_.features(node), s.pre);
                break;
            case NodeType::Lab:
                s.pre = column(params_.w_i, node.index);
                break;
            case NodeType::Diagnosis:
                s.pre = column(params_.w_d, node.index);
                break;
        }
        s.emb = activate(params_.activation, s.pre);
        s.grad.assign(d, 0.0);
        return nodes_.emplace(node, std::move(s)).first->second;
    }

    // Adds one sigmoid cross-entropy term; accumulates gradients when asked.
    double term(NodeId center, NodeId other, Relation rel, bool positive, bool with_grad, HgmGrad* grad) {
        // std::map keeps references stable across the second insertion
        NodeState& u = state(center);
        NodeState& c = state(other);
        const double s = score(params_, u.emb, rel, c.emb);
        const double loss = positive ? softplus(-s) : softplus(s);
        if (!with_grad) return loss;

        const double g = sigmoid(s) - (positive ? 1.0 : 0.0);
        const std::size_t d = params_.dim;
        switch (rel) {
            case Relation::Tested:
                for (std::size_t k = 0; k < d; ++k) {
                    const double a = c.emb[k] + params_.r_ip[k];
                    u.grad[k] += g * a;
                    c.grad[k] += g * u.emb[k];
                    grad->r_ip[k] += g * u.emb[k];
                }
                break;
            case Relation::Diagnosed:
                for (std::size_t k = 0; k < d; ++k) {
                    const double a = u.emb[k] + params_.r_pd[k];
                    u.grad[k] += g * c.emb[k];
                    grad->r_pd[k] += g * c.emb[k];
                    c.grad[k] += g * a;
                }
                break;
            case Relation::CoPatient:
                for (std::size_t k = 0; k < d; ++k) {
                    const double ue = u.emb[k];
                    u.grad[k] += g * c.emb[k];
                    c.grad[k] += g * ue;
                }
                break;
            case Relation::Temporal:
                for (std::size_t k = 0; k < d; ++k) {
                    const double a = u.emb[k] + params_.r_tt[k];
                    u.grad[k] += g * c.emb[k];
                    grad->r_tt[k] += g * c.emb[k];
                    c.grad[k] += g * a;
                }
                break;
        }
        return loss;
    }

    // Pushes the accumulated embedding gradients through the activation into
    // the projection matrices.
    void backward(HgmGrad& grad) {
        const std::size_t d = params_.dim;
        Vec da(d);
        for (auto& [node, s] : nodes_) {
            for (std::size_t k = 0; k < d; ++k) {
                da[k] = s.grad[k] * activation_derivative(params_.activation, s.pre[k], s.emb[k]);
            }
            switch (node.type) {
                case NodeType::PatientHour: {
                    auto x = graph_.features(node);
                    for (std::size_t k = 0; k < d; ++k) {
                        if (da[k] == 0.0) continue;
                        auto row = grad.w_p.row(k);
                        for (std::size_t i = 0; i < x.size(); ++i) row[i] += da[k] * x[i];
                    }
                    break;
                }
                case NodeType::Lab: {
                    auto& col = grad.w_i_cols.try_emplace(node.index, d, 0.0).first->second;
                    for (std::size_t k = 0; k < d; ++k) col[k] += da[k];
                    break;
                }
                case NodeType::Diagnosis: {
                    auto& col = grad.w_d_cols.try_emplace(node.index, d, 0.0).first->second;
                    for (std::size_t k = 0; k < d; ++k) col[k] += da[k];
                    break;
                }
            }
        }
    }

   private:
    const HgmParams& params_;
    const HeteroGraph& graph_;
    std::map<NodeId, NodeState> nodes_;
};

double run_context(const HgmParams& params, const HeteroGraph& graph, const ContextSample& ctx, HgmGrad* grad) {
    ContextEvaluator eval(params, graph);
    const bool with_grad = grad != nullptr;
    const NodeId u = ctx.center;
    double loss = 0.0;
    auto group = [&](const std::vector<NodeId>& pos, const std::vector<std::vector<NodeId>>& negs, Relation rel) {
        for (std::size_t i = 0; i < pos.size(); ++i) {
            loss += eval.term(u, pos[i], rel, true, with_grad, grad);
            if (i < negs.size()) {
                for (const auto& n : negs[i]) loss += eval.term(u, n, rel, false, with_grad, grad);
            }
        }
    };
    group(ctx.pos_diagnoses, ctx.neg_diagnoses, Relation::Diagnosed);
    group(ctx.pos_labs, ctx.neg_labs, Relation::Tested);
    group(ctx.pos_patients, ctx.neg_patients, Relation::CoPatient);
    if (ctx.pos_temporal) {
        loss += eval.term(u, *ctx.pos_temporal, Relation::Temporal, true, with_grad, grad);
        for (const auto& n : ctx.neg_temporal) loss += eval.term(u, n, Relation::Temporal, false, with_grad, grad);
    }
    if (with_grad) eval.backward(*grad);
    return loss;
}

HgmGrad empty_grad(const HgmParams& params) {
    HgmGrad g;
    g.w_p = Matrix(params.w_p.rows, params.w_p.cols);
    g.r_ip.assign(params.dim, 0.0);
    g.r_pd.assign(params.dim, 0.0);
    g.r_tt.assign(params.dim, 0.0);
    return g;
}

}  // namespace

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Tanh:
            return "tanh";
        case Activation::Sigmoid:
            return "sigmoid";
        case Activation::Relu:
            return "relu";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "relu") return Activation::Relu;
    throw std::invalid_argument("unknown activation `" + name + "` (expected tanh, sigmoid or relu)");
}

HgmParams HgmParams::init(std::size_t dim, std::size_t patient_inputs, std::size_t n_labs,
                          std::size_t n_diagnoses, Activation activation, std::uint64_t seed) {
    Rng rng(seed);
    const double bound = 0.5 / static_cast<double>(dim);
    HgmParams p;
    p.dim = dim;
    p.activation = activation;
    p.w_p = random_matrix(dim, patient_inputs, bound, rng);
    p.w_i = random_matrix(dim, n_labs, bound, rng);
    p.w_d = random_matrix(dim, n_diagnoses, bound, rng);
    p.r_ip = random_vec(dim, bound, rng);
    p.r_pd = random_vec(dim, bound, rng);
    p.r_tt = random_vec(dim, bound, rng);
    return p;
}

HgmParams HgmParams::zeros(std::size_t dim, std::size_t patient_inputs, std::size_t n_labs,
                           std::size_t n_diagnoses, Activation activation) {
    HgmParams p;
    p.dim = dim;
    p.activation = activation;
    p.w_p = Matrix(dim, patient_inputs);
    p.w_i = Matrix(dim, n_labs);
    p.w_d = Matrix(dim, n_diagnoses);
    p.r_ip.assign(dim, 0.0);
    p.r_pd.assign(dim, 0.0);
    p.r_tt.assign(dim, 0.0);
    return p;
}

nlohmann::json HgmParams::to_json() const {
    return nlohmann::json{{"format", "hgm-ehr/hgm"},
                          {"version", kCheckpointVersion},
                          {"dim", dim},
                          {"activation", to_string(activation)},
                          {"w_p", matrix_to_json(w_p)},
                          {"w_i", matrix_to_json(w_i)},
                          {"w_d", matrix_to_json(w_d)},
                          {"r_ip", r_ip},
                          {"r_pd", r_pd},
                          {"r_tt", r_tt}};
}

HgmParams HgmParams::from_json(const nlohmann::json& j) {
    if (j.at("format") != "hgm-ehr/hgm") throw std::invalid_argument("not an HGM checkpoint");
    if (j.at("version") != kCheckpointVersion) throw std::invalid_argument("unsupported HGM checkpoint version");
    HgmParams p;
    p.dim = j.at("dim").get<std::size_t>();
    p.activation = activation_from_string(j.at("activation").get<std::string>());
    p.w_p = matrix_from_json(j.at("w_p"));
    p.w_i = matrix_from_json(j.at("w_i"));
    p.w_d = matrix_from_json(j.at("w_d"));
    p.r_ip = j.at("r_ip").get<Vec>();
    p.r_pd = j.at("r_pd").get<Vec>();
    p.r_tt = j.at("r_tt").get<Vec>();
    const std::size_t d = p.dim;
    if (p.w_p.rows != d || p.w_i.rows != d || p.w_d.rows != d || p.r_ip.size() != d || p.r_pd.size() != d ||
        p.r_tt.size() != d) {
        throw std::invalid_argument("HGM checkpoint: inconsistent dimensions");
    }
    return p;
}

void HgmParams::save(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw std::runtime_error(file.string() + ": cannot write file");
    out << to_json().dump() << '\n';
}

HgmParams HgmParams::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error(file.string() + ": cannot open file");
    return from_json(nlohmann::json::parse(in));
}

Vec activate(Activation a, std::span<const double> pre) {
    Vec out(pre.size());
    for (std::size_t k = 0; k < pre.size(); ++k) {
        switch (a) {
            case Activation::Tanh:
                out[k] = std::tanh(pre[k]);
                break;
            case Activation::Sigmoid:
                out[k] = sigmoid(pre[k]);
                break;
            case Activation::Relu:
                out[k] = pre[k] > 0.0 ? pre[k] : 0.0;
                break;
        }
    }
    return out;
}

Vec project(const HgmParams& params, NodeType type, std::span<const double> raw) {
    const Matrix& w = projection_for(params, type);
    if (raw.size() != w.cols) {
        throw std::invalid_argument(std::string("project: ") + to_string(type) + " input has " +
                                    std::to_string(raw.size()) + " entries, expected " + std::to_string(w.cols));
    }
    Vec pre(w.rows);
    kernels::omp::matvec(w, raw, pre);
    return activate(params.activation, pre);
}

Vec translate(std::span<const double> c, std::span<const double> relation) {
    if (c.size() != relation.size()) throw std::invalid_argument("translate: dimension mismatch");
    Vec out(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) out[k] = c[k] + relation[k];
    return out;
}

double score(const HgmParams& params, std::span<const double> u, Relation relation, std::span<const double> c) {
    double s = 0.0;
    switch (relation) {
        case Relation::Tested:
            for (std::size_t k = 0; k < u.size(); ++k) s += (c[k] + params.r_ip[k]) * u[k];
            break;
        case Relation::Diagnosed:
            for (std::size_t k = 0; k < u.size(); ++k) s += (u[k] + params.r_pd[k]) * c[k];
            break;
        case Relation::CoPatient:
            for (std::size_t k = 0; k < u.size(); ++k) s += c[k] * u[k];
            break;
        case Relation::Temporal:
            for (std::size_t k = 0; k < u.size(); ++k) s += (u[k] + params.r_tt[k]) * c[k];
            break;
    }
    return s;
}

Vec embed_node(const HgmParams& params, const HeteroGraph& graph, NodeId node) {
    switch (node.type) {
        case NodeType::PatientHour:
            return project(params, node.type, graph.features(node));
        case NodeType::Lab:
            return activate(params.activation, column(params.w_i, node.index));
        case NodeType::Diagnosis:
            return activate(params.activation, column(params.w_d, node.index));
    }
    throw std::logic_error("unknown node type");
}

double exact_softmax_loss(const HgmParams& params, const HeteroGraph& graph, NodeId center) {
    const Vec u = embed_node(params, graph, center);
    const auto next = graph.temporal_next(center);
    auto pair_score = [&](NodeId v) {
        Relation rel = (next && v == *next) ? Relation::Temporal : relation_for(v.type);
        return score(params, u, rel, embed_node(params, graph, v));
    };

    std::vector<double> all;
    for (NodeType t : {NodeType::PatientHour, NodeType::Lab, NodeType::Diagnosis}) {
        for (std::uint32_t i = 0; i < graph.n_nodes(t); ++i) {
            NodeId v{t, i};
            if (v == center) continue;
            all.push_back(pair_score(v));
        }
    }
    if (all.empty()) return 0.0;
    const double peak = *std::max_element(all.begin(), all.end());
    double z = 0.0;
    for (double s : all) z += std::exp(s - peak);
    const double log_z = peak + std::log(z);

    double loss = 0.0;
    for (NodeType t : {NodeType::Lab, NodeType::Diagnosis, NodeType::PatientHour}) {
        for (NodeId c : neighbors(graph, center, t)) loss -= pair_score(c) - log_z;
    }
    return loss;
}

double ns_loss(const HgmParams& params, const HeteroGraph& graph, const ContextSample& context) {
    return run_context(params, graph, context, nullptr);
}

LossAndGrad ns_loss_and_grad(const HgmParams& params, const HeteroGraph& graph, const ContextSample& context) {
    LossAndGrad out;
    out.grad = empty_grad(params);
    out.loss = run_context(params, graph, context, &out.grad);
    return out;
}

HgmGrad ns_grad(const HgmParams& params, const HeteroGraph& graph, const ContextSample& context) {
    return ns_loss_and_grad(params, graph, context).grad;
}

HgmParams HgmGrad::dense(const HgmParams& like) const {
    HgmParams g = HgmParams::zeros(like.dim, like.w_p.cols, like.w_i.cols, like.w_d.cols, like.activation);
    g.w_p = w_p;
    for (const auto& [c, col] : w_i_cols) {
        for (std::size_t k = 0; k < col.size(); ++k) g.w_i(k, c) = col[k];
    }
    for (const auto& [c, col] : w_d_cols) {
        for (std::size_t k = 0; k < col.size(); ++k) g.w_d(k, c) = col[k];
    }
    g.r_ip = r_ip;
    g.r_pd = r_pd;
    g.r_tt = r_tt;
    return g;
}

void apply_gradient(HgmParams& params, const HgmGrad& grad, double lr) {
    for (std::size_t i = 0; i < params.w_p.data.size(); ++i) params.w_p.data[i] -= lr * grad.w_p.data[i];
    for (const auto& [c, col] : grad.w_i_cols) {
        for (std::size_t k = 0; k < col.size(); ++k) params.w_i(k, c) -= lr * col[k];
    }
    for (const auto& [c, col] : grad.w_d_cols) {
        for (std::size_t k = 0; k < col.size(); ++k) params.w_d(k, c) -= lr * col[k];
    }
    for (std::size_t k = 0; k < params.dim; ++k) {
        params.r_ip[k] -= lr * grad.r_ip[k];
        params.r_pd[k] -= lr * grad.r_pd[k];
        params.r_tt[k] -= lr * grad.r_tt[k];
    }
}

void HgmTrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("hgm: learning_rate must be positive");
    if (!(min_learning_rate > 0.0) || min_learning_rate > learning_rate) {
        throw std::invalid_argument("hgm: min_learning_rate must lie in (0, learning_rate]");
    }
    if (dim < 2) throw std::invalid_argument("hgm: dim must be at least 2");
    sampler.validate();
}

HgmTrainResult train_hgm(const HeteroGraph& graph, const HgmTrainConfig& config) {
    config.validate();
    if (graph.n_patient_hours() == 0) throw std::invalid_argument("train_hgm: graph has no patient-hour nodes");

    HgmTrainResult result;
    result.params = HgmParams::init(config.dim, graph.n_labs(), graph.n_labs(), graph.n_diagnoses(),
                                    config.activation, derive_seed(config.seed, "hgm-init"));
    if (config.epochs == 0) return result;

    SamplerConfig sampler_config = config.sampler;
    sampler_config.seed = derive_seed(config.seed, "hgm-sampler");
    Sampler sampler(graph, sampler_config);
    Rng order_rng(derive_seed(config.seed, "hgm-order"));

    // untrainable centers are fixed by the graph, so drop them once
    std::vector<NodeId> centers;
    for (std::uint32_t i = 0; i < graph.n_patient_hours(); ++i) {
        NodeId c{NodeType::PatientHour, i};
        if (graph.labs_tested(c).empty() && graph.diagnoses_of(graph.patient_of(c)).empty()) {
            ++result.skipped_centers;
            continue;
        }
        centers.push_back(c);
    }
    if (result.skipped_centers > 0) {
        spdlog::info("train_hgm: skipping {} centers with no labs and no diagnoses", result.skipped_centers);
    }
    if (centers.empty()) return result;

    const double total_steps = static_cast<double>(config.epochs * centers.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        order_rng.shuffle(std::span(centers));
        double epoch_loss = 0.0;
        for (NodeId c : centers) {
            const double progress = static_cast<double>(step++) / total_steps;
            const double lr =
                config.learning_rate - (config.learning_rate - config.min_learning_rate) * progress;
            ContextSample ctx = sampler.sample(c);
            LossAndGrad lg = ns_loss_and_grad(result.params, graph, ctx);
            epoch_loss += lg.loss;
            apply_gradient(result.params, lg.grad, lr);
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(centers.size()));
        spdlog::debug("train_hgm: epoch {} mean loss {:.6f}", epoch, result.epoch_loss.back());
    }
    return result;
}

Vec embed_patient_hour(const HgmParams& params, const HourSnapshot* snapshot, const Vec* previous) {
    if (snapshot != nullptr && snapshot->any_observed()) {
        return project(params, NodeType::PatientHour, snapshot->lab_values);
    }
    if (previous != nullptr) return translate(*previous, params.r_tt);
    return Vec(params.dim, 0.0);
}

}  // namespace hgm_ehr

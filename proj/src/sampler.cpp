#include "hgm_ehr/sampler.hpp"

#include <algorithm>

namespace hgm_ehr {

namespace {

std::vector<std::uint32_t> complement(const std::vector<std::uint32_t>& sorted_members, std::size_t size) {
    std::vector<std::uint32_t> out;
    out.reserve(size - std::min(size, sorted_members.size()));
    auto it = sorted_members.begin();
    for (std::uint32_t i = 0; i < size; ++i) {
        if (it != sorted_members.end() && *it == i) {
            ++it;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

void draw_from(const std::vector<std::uint32_t>& pool, NodeType type, std::size_t k, Rng& rng,
               std::vector<NodeId>& out) {
    for (std::size_t j = 0; j < k; ++j) out.push_back({type, pool[rng.uniform_index(pool.size())]});
}

void draw_patient_hours(const HeteroGraph& graph, const std::vector<std::uint32_t>& patients, std::size_t k,
                        Rng& rng, std::vector<NodeId>& out) {
    const std::size_t window = graph.window();
    for (std::size_t j = 0; j < k; ++j) {
        std::size_t idx = rng.uniform_index(patients.size() * window);
        out.push_back(graph.patient_hour(patients[idx / window], static_cast<std::uint32_t>(idx % window)));
    }
}

ContextSample sample_context_impl(const HeteroGraph& graph, NodeId center, const SamplerConfig& config,
                                  Rng& rng, const std::vector<std::uint32_t>& unrelated) {
    if (center.type != NodeType::PatientHour || !graph.has_node(center)) {
        throw SamplingError("sample_context: center must be an existing patient-hour node");
    }
    const std::uint32_t patient = graph.patient_of(center);
    const auto& diags = graph.diagnoses_of(patient);
    const auto& labs = graph.labs_tested(center);
    if (diags.empty() && labs.empty()) {
        throw SamplingError("sample_context: center has no diagnoses and no tested labs");
    }

    ContextSample s;
    s.center = center;
    const std::size_t K = config.negatives;
    const auto lab_pool = complement(labs, graph.n_labs());
    const auto diag_pool = complement(diags, graph.n_diagnoses());

    if (!diags.empty()) {
        for (std::size_t i = 0; i < config.n_diag; ++i) {
            s.pos_diagnoses.push_back({NodeType::Diagnosis, diags[rng.uniform_index(diags.size())]});
            auto& negs = s.neg_diagnoses.emplace_back();
            if (!diag_pool.empty()) draw_from(diag_pool, NodeType::Diagnosis, K, rng, negs);
        }
    }
    if (!labs.empty()) {
        for (std::size_t i = 0; i < config.n_lab; ++i) {
            s.pos_labs.push_back({NodeType::Lab, labs[rng.uniform_index(labs.size())]});
            auto& negs = s.neg_labs.emplace_back();
            if (!lab_pool.empty()) draw_from(lab_pool, NodeType::Lab, K, rng, negs);
        }
    }
    // co-patients: walk center -> sampled diagnosis -> another patient's hour
    // node. A sampled diagnosis no other patient has is swapped for a uniform
    // draw among the ones that do.
    std::vector<std::uint32_t> shared;
    for (auto d : diags) {
        if (graph.patients_with(d).size() > 1) shared.push_back(d);
    }
    if (!shared.empty()) {
        std::vector<std::uint32_t> others;
        for (std::size_t i = 0; i < config.n_copatient; ++i) {
            auto d = s.pos_diagnoses[i % s.pos_diagnoses.size()].index;
            if (graph.patients_with(d).size() < 2) d = shared[rng.uniform_index(shared.size())];
            others.clear();
            for (auto q : graph.patients_with(d)) {
                if (q != patient) others.push_back(q);
            }
            draw_patient_hours(graph, others, 1, rng, s.pos_patients);
            auto& negs = s.neg_patients.emplace_back();
            if (!unrelated.empty()) draw_patient_hours(graph, unrelated, K, rng, negs);
        }
    }
    if (auto next = graph.temporal_next(center)) {
        s.pos_temporal = *next;
        if (!unrelated.empty()) draw_patient_hours(graph, unrelated, K, rng, s.neg_temporal);
    }
    return s;
}

}  // namespace

void SamplerConfig::validate() const {
    if (n_diag < 1 || n_lab < 1 || n_copatient < 1 || negatives < 1) {
        throw std::invalid_argument("sampler config: all counts must be at least 1");
    }
}

std::vector<std::uint32_t> unrelated_patients(const HeteroGraph& graph, std::uint32_t patient) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t q = 0; q < graph.n_patients(); ++q) {
        if (q != patient && !graph.share_diagnosis(patient, q)) out.push_back(q);
    }
    return out;
}

std::vector<NodeId> sample_negatives(const HeteroGraph& graph, NodeId center, NodeType type, std::size_t k,
                                     Rng& rng) {
    if (center.type != NodeType::PatientHour || !graph.has_node(center)) {
        throw SamplingError("sample_negatives: center must be an existing patient-hour node");
    }
    std::vector<NodeId> out;
    out.reserve(k);
    const std::uint32_t patient = graph.patient_of(center);
    switch (type) {
        case NodeType::Lab: {
            auto pool = complement(graph.labs_tested(center), graph.n_labs());
            if (pool.empty()) throw SamplingError("sample_negatives: every lab is linked to the center");
            draw_from(pool, type, k, rng, out);
            break;
        }
        case NodeType::Diagnosis: {
            auto pool = complement(graph.diagnoses_of(patient), graph.n_diagnoses());
            if (pool.empty()) throw SamplingError("sample_negatives: every diagnosis is linked to the center");
            draw_from(pool, type, k, rng, out);
            break;
        }
        case NodeType::PatientHour: {
            auto pool = unrelated_patients(graph, patient);
            if (pool.empty()) throw SamplingError("sample_negatives: no unrelated patients");
            draw_patient_hours(graph, pool, k, rng, out);
            break;
        }
    }
    return out;
}

ContextSample sample_context(const HeteroGraph& graph, NodeId center, const SamplerConfig& config, Rng& rng) {
    config.validate();
    if (center.type != NodeType::PatientHour || !graph.has_node(center)) {
        throw SamplingError("sample_context: center must be an existing patient-hour node");
    }
    return sample_context_impl(graph, center, config, rng, unrelated_patients(graph, graph.patient_of(center)));
}

Sampler::Sampler(const HeteroGraph& graph, SamplerConfig config)
    : graph_(graph), config_(config), rng_(config.seed), unrelated_cache_(graph.n_patients()) {
    config_.validate();
}

ContextSample Sampler::sample(NodeId center) {
    if (center.type != NodeType::PatientHour || !graph_.has_node(center)) {
        throw SamplingError("sample_context: center must be an existing patient-hour node");
    }
    auto& pool = unrelated_cache_[graph_.patient_of(center)];
    if (!pool) pool = unrelated_patients(graph_, graph_.patient_of(center));
    return sample_context_impl(graph_, center, config_, rng_, *pool);
}

}  // namespace hgm_ehr

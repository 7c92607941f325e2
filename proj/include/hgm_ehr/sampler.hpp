#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hgm_ehr/graph.hpp"
#include "hgm_ehr/rng.hpp"

namespace hgm_ehr {

struct SamplerConfig {
    std::size_t n_diag = 10;
    std::size_t n_lab = 10;
    std::size_t n_copatient = 10;
    std::size_t negatives = 5;  // K per positive term
    std::uint64_t seed = 0;

    void validate() const;
};

/// One skip-gram context around a patient-hour center.
///
/// Each positive carries its own list of K negatives of the same node type,
/// stored at the same position in the matching neg_* vector. A negative list
/// is empty when the type has no eligible non-neighbors.
struct ContextSample {
    NodeId center;
    std::vector<NodeId> pos_diagnoses;
    std::vector<NodeId> pos_labs;
    std::vector<NodeId> pos_patients;
    std::optional<NodeId> pos_temporal;

    std::vector<std::vector<NodeId>> neg_diagnoses;
    std::vector<std::vector<NodeId>> neg_labs;
    std::vector<std::vector<NodeId>> neg_patients;
    std::vector<NodeId> neg_temporal;

    std::size_t n_positives() const {
        return pos_diagnoses.size() + pos_labs.size() + pos_patients.size() + (pos_temporal ? 1 : 0);
    }
    bool operator==(const ContextSample&) const = default;
};

class SamplingError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Patients other than `patient` that share no diagnosis with it.
std::vector<std::uint32_t> unrelated_patients(const HeteroGraph& graph, std::uint32_t patient);

// K uniform draws, with replacement, from nodes of `type` with no one-hop link
// to `center`. For PatientHour the pool is the hour nodes of unrelated
// patients. Throws SamplingError when the pool is empty.
std::vector<NodeId> sample_negatives(const HeteroGraph& graph, NodeId center, NodeType type,
                                     std::size_t k, Rng& rng);

ContextSample sample_context(const HeteroGraph& graph, NodeId center, const SamplerConfig& config,
                             Rng& rng);

/// Stateful sampler for one worker: owns its random stream and caches the
/// per-patient negative pools. Draws match sample_context for the same stream.
class Sampler {
   public:
    Sampler(const HeteroGraph& graph, SamplerConfig config);

    ContextSample sample(NodeId center);
    Rng& rng() { return rng_; }

   private:
    const HeteroGraph& graph_;
    SamplerConfig config_;
    Rng rng_;
    std::vector<std::optional<std::vector<std::uint32_t>>> unrelated_cache_;
};

}  // namespace hgm_ehr

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgm_ehr/ingest.hpp"

namespace hgm_ehr {

enum class NodeType : std::uint8_t { PatientHour, Lab, Diagnosis };

const char* to_string(NodeType type);

// Patient-hour nodes use the flat index patient_ordinal * window + hour.
struct NodeId {
    NodeType type = NodeType::PatientHour;
    std::uint32_t index = 0;

    auto operator<=>(const NodeId&) const = default;
};

/// Immutable typed graph over one set of patients and a fixed window.
///
/// Patients are ordered by patient_id, so the graph does not depend on the
/// order records were supplied in. Diagnoses attach at patient level and are
/// shared by every hour node of that patient; tested edges are per hour.
class HeteroGraph {
   public:
    std::uint32_t window() const { return window_; }
    std::size_t n_patients() const { return patient_ids_.size(); }
    std::size_t n_patient_hours() const { return patient_ids_.size() * window_; }
    std::size_t n_labs() const { return n_labs_; }
    std::size_t n_diagnoses() const { return n_diagnoses_; }
    std::size_t n_nodes(NodeType type) const;

    NodeId patient_hour(std::uint32_t patient, std::uint32_t hour) const {
        return {NodeType::PatientHour, patient * window_ + hour};
    }
    std::uint32_t patient_of(NodeId node) const { return node.index / window_; }
    std::uint32_t hour_of(NodeId node) const { return node.index % window_; }

    const std::string& patient_id(std::uint32_t ordinal) const { return patient_ids_.at(ordinal); }
    std::optional<std::uint32_t> ordinal_of(const std::string& patient_id) const;

    /// Normalized lab vector attached to a patient-hour node.
    std::span<const double> features(NodeId node) const;
    const HourSnapshot& snapshot(NodeId node) const { return snapshots_.at(node.index); }

    const std::vector<std::uint32_t>& labs_tested(NodeId patient_hour) const {
        return tested_.at(patient_hour.index);
    }
    const std::vector<std::uint32_t>& patient_hours_testing(std::uint32_t lab) const {
        return tested_by_.at(lab);
    }
    const std::vector<std::uint32_t>& diagnoses_of(std::uint32_t patient) const {
        return diagnosed_.at(patient);
    }
    const std::vector<std::uint32_t>& patients_with(std::uint32_t diagnosis) const {
        return diagnosed_by_.at(diagnosis);
    }

    // One hour closer to the endpoint (hour - 1); none at hour 0.
    std::optional<NodeId> temporal_next(NodeId patient_hour) const;

    bool has_node(NodeId node) const { return node.index < n_nodes(node.type); }

    // Whether the patients share at least one diagnosis.
    bool share_diagnosis(std::uint32_t patient_a, std::uint32_t patient_b) const;

    void dump_jsonl(std::ostream& out) const;

   private:
    friend HeteroGraph build_graph(std::span<const PatientRecord>, std::size_t, std::size_t,
                                   std::uint32_t, const LabNormalizer*);

    std::uint32_t window_ = 0;
    std::size_t n_labs_ = 0;
    std::size_t n_diagnoses_ = 0;
    std::vector<std::string> patient_ids_;
    std::unordered_map<std::string, std::uint32_t> ordinal_;
    std::vector<HourSnapshot> snapshots_;
    std::vector<std::vector<std::uint32_t>> tested_;        // patient-hour -> labs
    std::vector<std::vector<std::uint32_t>> tested_by_;     // lab -> patient-hours
    std::vector<std::vector<std::uint32_t>> diagnosed_;     // patient -> diagnoses
    std::vector<std::vector<std::uint32_t>> diagnosed_by_;  // diagnosis -> patients
};

// Bins every record and wires the typed edges. When `normalizer` is given the
// attached lab vectors are z-scored.
HeteroGraph build_graph(std::span<const PatientRecord> records, std::size_t n_labs,
                        std::size_t n_diagnoses, std::uint32_t window_hours,
                        const LabNormalizer* normalizer = nullptr);

inline HeteroGraph build_graph(std::span<const PatientRecord> records, const Vocabulary& vocab,
                               std::uint32_t window_hours, const LabNormalizer* normalizer = nullptr) {
    return build_graph(records, vocab.n_labs(), vocab.n_diagnoses(), window_hours, normalizer);
}

std::vector<double> multi_hot(std::span<const std::uint32_t> indices, std::size_t size);

// One-hop neighbors of `node` with type `target`. PatientHour -> PatientHour
// covers the hour nodes of other patients sharing a diagnosis plus the
// temporal_next node.
std::vector<NodeId> neighbors(const HeteroGraph& graph, NodeId node, NodeType target);

}  // namespace hgm_ehr

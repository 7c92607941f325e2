#include "hgm_ehr/graph.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hgm_ehr {

const char* to_string(NodeType type) {
    switch (type) {
        case NodeType::PatientHour:
            return "patient_hour";
        case NodeType::Lab:
            return "lab";
        case NodeType::Diagnosis:
            return "diagnosis";
    }
    return "unknown";
}

std::size_t HeteroGraph::n_nodes(NodeType type) const {
    switch (type) {
        case NodeType::PatientHour:
            return n_patient_hours();
        case NodeType::Lab:
            return n_labs_;
        case NodeType::Diagnosis:
            return n_diagnoses_;
    }
    return 0;
}

std::optional<std::uint32_t> HeteroGraph::ordinal_of(const std::string& patient_id) const {
    auto it = ordinal_.find(patient_id);
    if (it == ordinal_.end()) return std::nullopt;
    return it->second;
}

std::span<const double> HeteroGraph::features(NodeId node) const {
    if (node.type != NodeType::PatientHour) throw std::invalid_argument("features: not a patient-hour node");
    return snapshots_.at(node.index).lab_values;
}

std::optional<NodeId> HeteroGraph::temporal_next(NodeId node) const {
    if (node.type != NodeType::PatientHour || hour_of(node) == 0) return std::nullopt;
    return NodeId{NodeType::PatientHour, node.index - 1};
}

bool HeteroGraph::share_diagnosis(std::uint32_t a, std::uint32_t b) const {
    const auto& da = diagnosed_[a];
    const auto& db = diagnosed_[b];
    auto i = da.begin();
    auto j = db.begin();
    while (i != da.end() && j != db.end()) {
        if (*i == *j) return true;
        if (*i < *j)
            ++i;
        else
            ++j;
    }
    return false;
}

void HeteroGraph::dump_jsonl(std::ostream& out) const {
    for (std::uint32_t p = 0; p < n_patients(); ++p) {
        for (std::uint32_t h = 0; h < window_; ++h) {
            out << nlohmann::json{{"node", "patient_hour"}, {"index", p * window_ + h},
                                  {"patient_id", patient_ids_[p]}, {"hour", h}}
                       .dump()
                << '\n';
        }
    }
    for (std::size_t l = 0; l < n_labs_; ++l) out << nlohmann::json{{"node", "lab"}, {"index", l}}.dump() << '\n';
    for (std::size_t d = 0; d < n_diagnoses_; ++d) {
        out << nlohmann::json{{"node", "diagnosis"}, {"index", d}}.dump() << '\n';
    }
    for (std::size_t ph = 0; ph < tested_.size(); ++ph) {
        for (auto l : tested_[ph]) {
            out << nlohmann::json{{"edge", "tested"}, {"from", ph}, {"to", l}}.dump() << '\n';
        }
        if (ph % window_ != 0) {
            out << nlohmann::json{{"edge", "temporal"}, {"from", ph}, {"to", ph - 1}}.dump() << '\n';
        }
    }
    for (std::size_t p = 0; p < diagnosed_.size(); ++p) {
        for (auto d : diagnosed_[p]) {
            out << nlohmann::json{{"edge", "diagnosed"}, {"patient", p}, {"to", d}}.dump() << '\n';
        }
    }
}

HeteroGraph build_graph(std::span<const PatientRecord> records, std::size_t n_labs,
                        std::size_t n_diagnoses, std::uint32_t window_hours,
                        const LabNormalizer* normalizer) {
    if (window_hours == 0) throw std::invalid_argument("build_graph: window must be positive");
    HeteroGraph g;
    g.window_ = window_hours;
    g.n_labs_ = n_labs;
    g.n_diagnoses_ = n_diagnoses;

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return records[a].patient_id < records[b].patient_id; });

    g.tested_by_.resize(n_labs);
    g.diagnosed_by_.resize(n_diagnoses);
    g.snapshots_.reserve(records.size() * window_hours);
    g.tested_.reserve(records.size() * window_hours);

    for (std::size_t i : order) {
        const PatientRecord& rec = records[i];
        const auto ordinal = static_cast<std::uint32_t>(g.patient_ids_.size());
        if (!g.ordinal_.emplace(rec.patient_id, ordinal).second) {
            throw std::invalid_argument("build_graph: duplicate patient `" + rec.patient_id + "`");
        }
        g.patient_ids_.push_back(rec.patient_id);

        std::vector<HourSnapshot> snaps = bin_events(rec, window_hours, n_labs);
        if (normalizer) normalizer->apply(snaps);
        for (auto& s : snaps) {
            const auto node = static_cast<std::uint32_t>(g.snapshots_.size());
            std::vector<std::uint32_t> labs;
            for (std::uint32_t l = 0; l < n_labs; ++l) {
                if (s.lab_observed[l]) {
                    labs.push_back(l);
                    g.tested_by_[l].push_back(node);
                }
            }
            g.tested_.push_back(std::move(labs));
            g.snapshots_.push_back(std::move(s));
        }

        std::vector<std::uint32_t> diags = rec.diagnoses;
        std::sort(diags.begin(), diags.end());
        diags.erase(std::unique(diags.begin(), diags.end()), diags.end());
        for (auto d : diags) {
            if (d >= n_diagnoses) {
                throw std::out_of_range("build_graph: diagnosis " + std::to_string(d) + " outside vocabulary");
            }
            g.diagnosed_by_[d].push_back(ordinal);
        }
        g.diagnosed_.push_back(std::move(diags));
    }
    return g;
}

std::vector<double> multi_hot(std::span<const std::uint32_t> indices, std::size_t size) {
    std::vector<double> out(size, 0.0);
    for (auto i : indices) {
        if (i >= size) {
            throw std::out_of_range("multi_hot: index " + std::to_string(i) + " >= size " + std::to_string(size));
        }
        out[i] = 1.0;
    }
    return out;
}

std::vector<NodeId> neighbors(const HeteroGraph& graph, NodeId node, NodeType target) {
    if (!graph.has_node(node)) throw std::out_of_range("neighbors: node does not exist");
    std::vector<NodeId> out;
    switch (node.type) {
        case NodeType::PatientHour: {
            const std::uint32_t patient = graph.patient_of(node);
            if (target == NodeType::Lab) {
                for (auto l : graph.labs_tested(node)) out.push_back({NodeType::Lab, l});
            } else if (target == NodeType::Diagnosis) {
                for (auto d : graph.diagnoses_of(patient)) out.push_back({NodeType::Diagnosis, d});
            } else {
                std::vector<std::uint32_t> others;
                for (auto d : graph.diagnoses_of(patient)) {
                    for (auto q : graph.patients_with(d)) {
                        if (q != patient) others.push_back(q);
                    }
                }
                std::sort(others.begin(), others.end());
                others.erase(std::unique(others.begin(), others.end()), others.end());
                if (auto next = graph.temporal_next(node)) out.push_back(*next);
                for (auto q : others) {
                    for (std::uint32_t h = 0; h < graph.window(); ++h) out.push_back(graph.patient_hour(q, h));
                }
                std::sort(out.begin(), out.end());
            }
            break;
        }
        case NodeType::Lab:
            if (target == NodeType::PatientHour) {
                for (auto ph : graph.patient_hours_testing(node.index)) out.push_back({NodeType::PatientHour, ph});
            }
            break;
        case NodeType::Diagnosis:
            if (target == NodeType::PatientHour) {
                for (auto p : graph.patients_with(node.index)) {
                    for (std::uint32_t h = 0; h < graph.window(); ++h) out.push_back(graph.patient_hour(p, h));
                }
            }
            break;
    }
    return out;
}

}  // namespace hgm_ehr

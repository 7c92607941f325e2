#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgm_ehr/hgm.hpp"
#include "hgm_ehr/ingest.hpp"
#include "hgm_ehr/tensor.hpp"

namespace hgm_ehr {

enum class FeatureMode : std::uint8_t {
    RawLabsDiag,    // labs | diagnosis multi-hot
    RawLabs,        // labs
    EmbedOnly,      // HGM embedding
    EmbedPlusLabs,  // HGM embedding | labs
    EmbedPlusDiag,  // HGM embedding | diagnosis multi-hot
};

const char* to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& name);
bool needs_embedding(FeatureMode mode);

/// CNN input: `time` rows (oldest hour first) by `features` columns, row-major.
struct FeatureMatrix {
    std::size_t time = 0;
    std::size_t features = 0;
    std::vector<double> values;
    bool label = false;

    double& at(std::size_t t, std::size_t f) { return values[t * features + f]; }
    double at(std::size_t t, std::size_t f) const { return values[t * features + f]; }
};

struct FeatureContext {
    std::size_t n_labs = 0;
    std::size_t n_diagnoses = 0;
    const LabNormalizer* normalizer = nullptr;
    const HgmParams* hgm = nullptr;
};

std::size_t feature_count(FeatureMode mode, std::size_t n_labs, std::size_t n_diagnoses, std::size_t dim);

// Row t holds hour (window - 1 - t). Missing-hour embeddings chain forward in
// time from the oldest row: previous row's embedding + r_tt.
FeatureMatrix build_features(const PatientRecord& record, std::uint32_t window, FeatureMode mode,
                             const FeatureContext& context);

}  // namespace hgm_ehr

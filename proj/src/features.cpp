#include "hgm_ehr/features.hpp"

#include <stdexcept>

namespace hgm_ehr {

const char* to_string(FeatureMode mode) {
    switch (mode) {
        case FeatureMode::RawLabsDiag:
            return "raw_labs_diag";
        case FeatureMode::RawLabs:
            return "raw_labs";
        case FeatureMode::EmbedOnly:
            return "embed_only";
        case FeatureMode::EmbedPlusLabs:
            return "embed_plus_labs";
        case FeatureMode::EmbedPlusDiag:
            return "embed_plus_diag";
    }
    return "unknown";
}

FeatureMode feature_mode_from_string(const std::string& name) {
    for (auto m : {FeatureMode::RawLabsDiag, FeatureMode::RawLabs, FeatureMode::EmbedOnly,
                   FeatureMode::EmbedPlusLabs, FeatureMode::EmbedPlusDiag}) {
        if (name == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown feature mode `" + name + "`");
}

bool needs_embedding(FeatureMode mode) {
    return mode == FeatureMode::EmbedOnly || mode == FeatureMode::EmbedPlusLabs ||
           mode == FeatureMode::EmbedPlusDiag;
}

std::size_t feature_count(FeatureMode mode, std::size_t n_labs, std::size_t n_diagnoses, std::size_t dim) {
    switch (mode) {
        case FeatureMode::RawLabsDiag:
            return n_labs + n_diagnoses;
        case FeatureMode::RawLabs:
            return n_labs;
        case FeatureMode::EmbedOnly:
            return dim;
        case FeatureMode::EmbedPlusLabs:
            return dim + n_labs;
        case FeatureMode::EmbedPlusDiag:
            return dim + n_diagnoses;
    }
    return 0;
}

FeatureMatrix build_features(const PatientRecord& record, std::uint32_t window, FeatureMode mode,
                             const FeatureContext& ctx) {
    const bool embed = needs_embedding(mode);
    if (embed && ctx.hgm == nullptr) {
        throw std::invalid_argument(std::string("build_features: mode ") + to_string(mode) +
                                    " requires trained HGM parameters");
    }
    const std::size_t dim = embed ? ctx.hgm->dim : 0;
    FeatureMatrix m;
    m.time = window;
    m.features = feature_count(mode, ctx.n_labs, ctx.n_diagnoses, dim);
    m.values.assign(m.time * m.features, 0.0);
    m.label = record.died;

    std::vector<HourSnapshot> snaps = bin_events(record, window, ctx.n_labs);
    if (ctx.normalizer) ctx.normalizer->apply(snaps);

    const bool with_labs = mode == FeatureMode::RawLabs || mode == FeatureMode::RawLabsDiag ||
                           mode == FeatureMode::EmbedPlusLabs;
    const bool with_diag = mode == FeatureMode::RawLabsDiag || mode == FeatureMode::EmbedPlusDiag;
    std::vector<double> diag_hot;
    if (with_diag) diag_hot = multi_hot(record.diagnoses, ctx.n_diagnoses);

    Vec previous;
    for (std::size_t t = 0; t < window; ++t) {
        const HourSnapshot& snap = snaps[window - 1 - t];
        std::size_t col = 0;
        if (embed) {
            Vec e = embed_patient_hour(*ctx.hgm, &snap, t == 0 ? nullptr : &previous);
            for (double v : e) m.at(t, col++) = v;
            previous = std::move(e);
        }
        if (with_labs) {
            for (double v : snap.lab_values) m.at(t, col++) = v;
        }
        if (with_diag) {
            for (double v : diag_hot) m.at(t, col++) = v;
        }
    }
    return m;
}

}  // namespace hgm_ehr

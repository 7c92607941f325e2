#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

#include "hgm_ehr/experiment.hpp"
#include "hgm_ehr/ingest.hpp"

namespace hgm_ehr {

enum class DataSource : std::uint8_t { Synthetic, Files };

/// Everything a CLI run needs. Loaded from an INI-style file with sections
/// [data], [synth], [run], [hgm] and [cnn]; see configs/ for examples.
struct RunConfig {
    DataSource source = DataSource::Synthetic;
    std::filesystem::path events;
    std::filesystem::path diagnoses;
    std::filesystem::path outcomes;
    std::filesystem::path vocab;  // optional, fixes index order
    SynthConfig synth;
    std::vector<std::uint32_t> windows{6, 12, 24, 48};
    std::vector<Arm> arms{Arm::HGM, Arm::CNN, Arm::HGM_CNN};
    ExperimentConfig experiment;
    std::filesystem::path out_dir = "out";

    void validate() const;
};

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Relative data paths are resolved against `base_dir`.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& file);

}  // namespace hgm_ehr

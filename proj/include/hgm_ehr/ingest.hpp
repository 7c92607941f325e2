#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace hgm_ehr {

struct LabEvent {
    std::string patient_id;
    double hours_before_end = 0.0;
    std::uint32_t lab_id = 0;
    double value = 0.0;
};

struct PatientRecord {
    std::string patient_id;
    std::vector<LabEvent> events;
    std::vector<std::uint32_t> diagnoses;  // sorted, unique
    bool died = false;
    std::uint32_t end_hour = 0;
};

/// Dense name <-> index maps for labs and diagnoses. Indices are assigned in
/// order of first insertion.
class Vocabulary {
   public:
    Vocabulary() = default;
    static Vocabulary synthetic(std::size_t n_labs, std::size_t n_diagnoses);

    std::uint32_t add_lab(const std::string& name);
    std::uint32_t add_diagnosis(const std::string& name);
    std::optional<std::uint32_t> find_lab(const std::string& name) const;
    std::optional<std::uint32_t> find_diagnosis(const std::string& name) const;

    std::size_t n_labs() const { return labs_.size(); }
    std::size_t n_diagnoses() const { return diagnoses_.size(); }
    const std::string& lab_name(std::uint32_t i) const { return labs_.at(i); }
    const std::string& diagnosis_name(std::uint32_t i) const { return diagnoses_.at(i); }

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);

    bool operator==(const Vocabulary& other) const {
        return labs_ == other.labs_ && diagnoses_ == other.diagnoses_;
    }

   private:
    std::vector<std::string> labs_;
    std::vector<std::string> diagnoses_;
    std::unordered_map<std::string, std::uint32_t> lab_index_;
    std::unordered_map<std::string, std::uint32_t> diagnosis_index_;
};

struct HourSnapshot {
    std::string patient_id;
    std::uint32_t hour = 0;  // 0 is the bin closest to the endpoint
    std::vector<double> lab_values;
    std::vector<std::uint8_t> lab_observed;

    bool any_observed() const;
    bool operator==(const HourSnapshot&) const = default;
};

inline constexpr double kUnobservedFill = 0.0;

class ParseError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Reads the three CSV tables. `vocab` may be pre-populated (e.g. from a saved
// vocabulary); unseen names are appended. Records come back in outcomes-file
// order.
std::vector<PatientRecord> parse_records(const std::filesystem::path& events_file,
                                         const std::filesystem::path& diagnoses_file,
                                         const std::filesystem::path& outcomes_file,
                                         Vocabulary& vocab);

void write_records(const std::vector<PatientRecord>& records, const Vocabulary& vocab,
                   const std::filesystem::path& dir);

Vocabulary load_vocabulary(const std::filesystem::path& file);
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& file);

// Hourly bins [h, h+1) counted back from the endpoint; events at or beyond
// `window_hours` are dropped, repeated measurements within a bin are averaged.
std::vector<HourSnapshot> bin_events(const PatientRecord& record, std::uint32_t window_hours,
                                     std::size_t n_labs);

/// Per-lab z-score statistics fitted on observed training values only.
class LabNormalizer {
   public:
    LabNormalizer() = default;
    LabNormalizer(std::vector<double> mean, std::vector<double> stddev);

    static LabNormalizer fit(std::span<const std::vector<HourSnapshot>> patients,
                             std::size_t n_labs);

    // Observed entries become (x - mean) / std; unobserved stay at the fill value.
    void apply(HourSnapshot& snapshot) const;
    void apply(std::vector<HourSnapshot>& snapshots) const;

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& stddev() const { return stddev_; }

    nlohmann::json to_json() const;
    static LabNormalizer from_json(const nlohmann::json& j);

   private:
    std::vector<double> mean_;
    std::vector<double> stddev_;
};

struct SynthConfig {
    std::size_t n_patients = 500;
    std::size_t n_labs = 30;
    std::size_t n_diagnoses = 50;
    std::uint32_t horizon_hours = 48;
    double signal = 1.0;      // s in [0, 1]; 0 makes labels independent of the data
    double prevalence = 0.2;  // mortality rate at zero latent risk
    std::size_t planted_diagnoses = 8;
    std::size_t planted_labs = 6;
    double mean_background_diagnoses = 4.0;
    double test_rate = 0.35;          // per lab, per hour
    double missing_hour_rate = 0.1;   // chance an hour has no labs at all
    double repeat_rate = 0.1;         // chance of a second draw within the hour

    void validate() const;
};

// Two-stage generator: latent risk z ~ N(0,1) drives planted diagnoses and lab
// drift, and the label is drawn from logit(prevalence) + signal * 3 * z.
std::vector<PatientRecord> generate_synthetic(const SynthConfig& config, std::uint64_t seed);

}  // namespace hgm_ehr

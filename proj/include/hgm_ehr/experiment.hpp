#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hgm_ehr/cnn.hpp"
#include "hgm_ehr/features.hpp"
#include "hgm_ehr/hgm.hpp"
#include "hgm_ehr/ingest.hpp"

namespace hgm_ehr {

// HGM: embeddings only. CNN: raw labs. HGM_CNN: embeddings | raw labs.
enum class Arm : std::uint8_t { HGM, CNN, HGM_CNN };

const char* to_string(Arm arm);
Arm arm_from_string(const std::string& name);
FeatureMode feature_mode(Arm arm);

struct ExperimentConfig {
    HgmTrainConfig hgm;
    CnnConfig cnn;
    std::size_t folds = 10;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;  // folds trained concurrently
};

struct FoldReport {
    std::size_t fold = 0;
    double auroc = 0.0;
    double auprc = 0.0;
    std::size_t n_test = 0;
    std::size_t n_pos = 0;
    std::vector<double> scores;        // per test patient, for curve export
    std::vector<std::uint8_t> labels;
};

struct ExperimentReport {
    Arm arm = Arm::CNN;
    std::uint32_t window = 0;
    std::vector<FoldReport> folds;
    double mean_auroc = 0.0;
    double std_auroc = 0.0;  // sample std over folds
    double mean_auprc = 0.0;
    double std_auprc = 0.0;

    void summarize();
    nlohmann::json to_json() const;
    void write_json(const std::filesystem::path& file) const;
    void write_curves(const std::filesystem::path& roc_file, const std::filesystem::path& pr_file) const;
};

/// Everything fitted on one fold's training patients.
struct FoldModel {
    LabNormalizer normalizer;
    std::optional<HgmParams> hgm;
    std::map<Arm, CnnParams> cnn;
};

struct DataShape {
    std::size_t n_labs = 0;
    std::size_t n_diagnoses = 0;
};

// Seeds: split = derive(seed, "kfold"); HGM = derive(seed, "hgm", fold, window);
// CNN = derive(seed, "cnn/<arm>", fold, window).
std::vector<std::vector<std::string>> experiment_folds(std::span<const PatientRecord> records,
                                                       const ExperimentConfig& config);

// Splits records into (train, test) for one fold's test ids.
std::pair<std::vector<PatientRecord>, std::vector<PatientRecord>> split_records(
    std::span<const PatientRecord> records, const std::vector<std::string>& test_ids);

FoldModel train_fold(std::span<const PatientRecord> train, std::span<const Arm> arms, std::uint32_t window,
                     DataShape shape, const ExperimentConfig& config, std::size_t fold);

// nullopt when the test set holds a single class.
std::optional<FoldReport> score_fold(const FoldModel& model, Arm arm, std::span<const PatientRecord> test,
                                     std::uint32_t window, DataShape shape, std::size_t fold);

std::vector<ExperimentReport> run_experiments(std::span<const PatientRecord> records, std::span<const Arm> arms,
                                              std::uint32_t window, DataShape shape,
                                              const ExperimentConfig& config);

ExperimentReport run_experiment(std::span<const PatientRecord> records, Arm arm, std::uint32_t window,
                                DataShape shape, const ExperimentConfig& config);

}  // namespace hgm_ehr

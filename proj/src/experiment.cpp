#include "hgm_ehr/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <omp.h>
#include <spdlog/spdlog.h>

#include "hgm_ehr/graph.hpp"
#include "hgm_ehr/metrics.hpp"
#include "hgm_ehr/rng.hpp"

namespace hgm_ehr {

const char* to_string(Arm arm) {
    switch (arm) {
        case Arm::HGM:
            return "HGM";
        case Arm::CNN:
            return "CNN";
        case Arm::HGM_CNN:
            return "HGM_CNN";
    }
    return "unknown";
}

Arm arm_from_string(const std::string& name) {
    if (name == "HGM") return Arm::HGM;
    if (name == "CNN") return Arm::CNN;
    if (name == "HGM_CNN" || name == "HGM+CNN") return Arm::HGM_CNN;
    throw std::invalid_argument("unknown arm `" + name + "` (expected HGM, CNN or HGM_CNN)");
}

FeatureMode feature_mode(Arm arm) {
    switch (arm) {
        case Arm::HGM:
            return FeatureMode::EmbedOnly;
        case Arm::CNN:
            return FeatureMode::RawLabs;
        case Arm::HGM_CNN:
            return FeatureMode::EmbedPlusLabs;
    }
    return FeatureMode::RawLabs;
}

void ExperimentReport::summarize() {
    std::vector<double> roc, pr;
    for (const auto& f : folds) {
        roc.push_back(f.auroc);
        pr.push_back(f.auprc);
    }
    mean_auroc = mean_of(roc);
    std_auroc = sample_stddev(roc);
    mean_auprc = mean_of(pr);
    std_auprc = sample_stddev(pr);
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json fold_rows = nlohmann::json::array();
    for (const auto& f : folds) {
        fold_rows.push_back({{"fold", f.fold}, {"auroc", f.auroc}, {"auprc", f.auprc}, {"n_test", f.n_test}, {"n_pos", f.n_pos}});
    }
    return nlohmann::json{{"arm", to_string(arm)},       {"window", window},         {"folds", fold_rows},
                          {"mean_auroc", mean_auroc},    {"std_auroc", std_auroc},   {"mean_auprc", mean_auprc},
                          {"std_auprc", std_auprc}};
}

namespace {

void write_atomically(const std::filesystem::path& file, const std::string& content) {
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error(tmp.string() + ": cannot write file");
        out << content;
        if (!out) throw std::runtime_error(tmp.string() + ": write failed");
    }
    std::filesystem::rename(tmp, file);
}

}  // namespace

void ExperimentReport::write_json(const std::filesystem::path& file) const {
    write_atomically(file, to_json().dump(2) + "\n");
}

void ExperimentReport::write_curves(const std::filesystem::path& roc_file, const std::filesystem::path& pr_file) const {
    std::string roc = "fold,threshold,fpr,tpr\n";
    std::string pr = "fold,threshold,recall,precision\n";
    auto row = [](std::string& out, std::size_t fold, const CurvePoint& p) {
        nlohmann::json thr = p.threshold;  // shortest round-trip formatting; inf becomes null
        out += std::to_string(fold) + "," + (std::isinf(p.threshold) ? std::string("inf") : thr.dump()) + "," +
               nlohmann::json(p.x).dump() + "," + nlohmann::json(p.y).dump() + "\n";
    };
    for (const auto& f : folds) {
        for (const auto& p : roc_curve(f.scores, f.labels)) row(roc, f.fold, p);
        for (const auto& p : pr_curve(f.scores, f.labels)) row(pr, f.fold, p);
    }
    write_atomically(roc_file, roc);
    write_atomically(pr_file, pr);
}

std::vector<std::vector<std::string>> experiment_folds(std::span<const PatientRecord> records,
                                                       const ExperimentConfig& config) {
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.patient_id);
    return kfold_split(ids, config.folds, derive_seed(config.seed, "kfold"));
}

std::pair<std::vector<PatientRecord>, std::vector<PatientRecord>> split_records(
    std::span<const PatientRecord> records, const std::vector<std::string>& test_ids) {
    std::unordered_set<std::string> test(test_ids.begin(), test_ids.end());
    std::pair<std::vector<PatientRecord>, std::vector<PatientRecord>> out;
    for (const auto& r : records) (test.count(r.patient_id) ? out.second : out.first).push_back(r);
    return out;
}

FoldModel train_fold(std::span<const PatientRecord> train, std::span<const Arm> arms, std::uint32_t window,
                     DataShape shape, const ExperimentConfig& config, std::size_t fold) {
    FoldModel model;
    std::vector<std::vector<HourSnapshot>> binned;
    binned.reserve(train.size());
    for (const auto& r : train) binned.push_back(bin_events(r, window, shape.n_labs));
    model.normalizer = LabNormalizer::fit(binned, shape.n_labs);

    const bool any_embedding =
        std::any_of(arms.begin(), arms.end(), [](Arm a) { return needs_embedding(feature_mode(a)); });
    if (any_embedding) {
        HeteroGraph graph = build_graph(train, shape.n_labs, shape.n_diagnoses, window, &model.normalizer);
        HgmTrainConfig hc = config.hgm;
        hc.seed = derive_seed(config.seed, "hgm", fold, window);
        HgmTrainResult trained = train_hgm(graph, hc);
        if (!trained.epoch_loss.empty()) {
            spdlog::info("fold {} window {}: HGM loss {:.4f} -> {:.4f}", fold, window, trained.epoch_loss.front(),
                         trained.epoch_loss.back());
        }
        model.hgm = std::move(trained.params);
    }

    FeatureContext ctx{shape.n_labs, shape.n_diagnoses, &model.normalizer, model.hgm ? &*model.hgm : nullptr};
    for (Arm arm : arms) {
        std::vector<FeatureMatrix> examples;
        examples.reserve(train.size());
        for (const auto& r : train) examples.push_back(build_features(r, window, feature_mode(arm), ctx));
        CnnConfig cc = config.cnn;
        cc.seed = derive_seed(config.seed, std::string("cnn/") + to_string(arm), fold, window);
        CnnTrainResult trained = train_cnn(examples, cc);
        if (!trained.epoch_loss.empty()) {
            spdlog::info("fold {} window {} arm {}: CNN loss {:.4f} -> {:.4f}", fold, window, to_string(arm),
                         trained.epoch_loss.front(), trained.epoch_loss.back());
        }
        model.cnn.emplace(arm, std::move(trained.params));
    }
    return model;
}

std::optional<FoldReport> score_fold(const FoldModel& model, Arm arm, std::span<const PatientRecord> test,
                                     std::uint32_t window, DataShape shape, std::size_t fold) {
    auto it = model.cnn.find(arm);
    if (it == model.cnn.end()) throw std::invalid_argument(std::string("fold model has no CNN for arm ") + to_string(arm));
    FeatureContext ctx{shape.n_labs, shape.n_diagnoses, &model.normalizer, model.hgm ? &*model.hgm : nullptr};
    FoldReport rep;
    rep.fold = fold;
    rep.n_test = test.size();
    for (const auto& r : test) {
        rep.scores.push_back(predict(it->second, build_features(r, window, feature_mode(arm), ctx)));
        rep.labels.push_back(r.died ? 1 : 0);
        rep.n_pos += r.died ? 1 : 0;
    }
    if (rep.n_pos == 0 || rep.n_pos == rep.n_test) return std::nullopt;
    rep.auroc = auroc(rep.scores, rep.labels);
    rep.auprc = auprc(rep.scores, rep.labels);
    return rep;
}

std::vector<ExperimentReport> run_experiments(std::span<const PatientRecord> records, std::span<const Arm> arms,
                                              std::uint32_t window, DataShape shape,
                                              const ExperimentConfig& config) {
    if (arms.empty()) throw std::invalid_argument("run_experiments: no arms requested");
    const auto folds = experiment_folds(records, config);
    const std::size_t k = folds.size();
    std::vector<std::vector<std::optional<FoldReport>>> per_fold(k);
    std::vector<std::string> errors(k);

    const int jobs = static_cast<int>(std::max<std::size_t>(1, config.jobs));
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
    for (long f = 0; f < static_cast<long>(k); ++f) {
        const auto fold = static_cast<std::size_t>(f);
        try {
            auto [train, test] = split_records(records, folds[fold]);
            FoldModel model = train_fold(train, arms, window, shape, config, fold);
            for (Arm arm : arms) per_fold[fold].push_back(score_fold(model, arm, test, window, shape, fold));
        } catch (const std::exception& e) {
            errors[fold] = e.what();
        }
    }
    for (std::size_t f = 0; f < k; ++f) {
        if (!errors[f].empty()) throw std::runtime_error("fold " + std::to_string(f) + ": " + errors[f]);
    }

    std::vector<ExperimentReport> reports;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        ExperimentReport rep;
        rep.arm = arms[a];
        rep.window = window;
        for (std::size_t f = 0; f < k; ++f) {
            if (per_fold[f][a]) {
                rep.folds.push_back(std::move(*per_fold[f][a]));
            } else {
                spdlog::warn("arm {} window {}: fold {} test set has a single class, skipped", to_string(arms[a]),
                             window, f);
            }
        }
        rep.summarize();
        reports.push_back(std::move(rep));
    }
    return reports;
}

ExperimentReport run_experiment(std::span<const PatientRecord> records, Arm arm, std::uint32_t window,
                                DataShape shape, const ExperimentConfig& config) {
    const Arm arms[] = {arm};
    return run_experiments(records, arms, window, shape, config).front();
}

}  // namespace hgm_ehr

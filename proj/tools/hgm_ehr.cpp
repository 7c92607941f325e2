// hgm_ehr: synthetic data, training and cross-validated evaluation of the
// embedding / CNN mortality arms.
//
//   hgm_ehr synth --config run.ini --out data/
//   hgm_ehr train --config run.ini --out out/
//   hgm_ehr eval  --config run.ini --out out/
//   hgm_ehr run   --config run.ini --out out/ --jobs 4

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hgm_ehr/config.hpp"
#include "hgm_ehr/experiment.hpp"
#include "hgm_ehr/ingest.hpp"
#include "hgm_ehr/rng.hpp"

namespace fs = std::filesystem;
using namespace hgm_ehr;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> jobs;
    bool end_to_end = false;
};

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("hgm_ehr");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("HGM_EHR_LOG")) {
        auto parsed = spdlog::level::from_str(level);
        // from_str maps unknown names to off
        if (parsed != spdlog::level::off || std::string(level) == "off") spdlog::set_level(parsed);
    }
}

RunConfig resolve_config(const Options& opt) {
    RunConfig cfg;
    if (!opt.config.empty()) {
        cfg = load_run_config(opt.config);
    } else {
        cfg.validate();
    }
    if (opt.seed) cfg.experiment.seed = *opt.seed;
    if (!opt.out.empty()) cfg.out_dir = opt.out;
    if (opt.jobs) cfg.experiment.jobs = *opt.jobs;
    return cfg;
}

struct Dataset {
    std::vector<PatientRecord> records;
    Vocabulary vocab;
    DataShape shape() const { return {vocab.n_labs(), vocab.n_diagnoses()}; }
};

Dataset load_data(const RunConfig& cfg) {
    Dataset d;
    if (cfg.source == DataSource::Synthetic) {
        d.records = generate_synthetic(cfg.synth, derive_seed(cfg.experiment.seed, "synth"));
        d.vocab = Vocabulary::synthetic(cfg.synth.n_labs, cfg.synth.n_diagnoses);
    } else {
        if (!cfg.vocab.empty()) d.vocab = load_vocabulary(cfg.vocab);
        d.records = parse_records(cfg.events, cfg.diagnoses, cfg.outcomes, d.vocab);
    }
    spdlog::info("loaded {} patients, {} labs, {} diagnoses", d.records.size(), d.vocab.n_labs(),
                 d.vocab.n_diagnoses());
    return d;
}

fs::path fold_dir(const RunConfig& cfg, std::uint32_t window, std::size_t fold) {
    return cfg.out_dir / "checkpoints" / ("w" + std::to_string(window) + "_f" + std::to_string(fold));
}

void write_json_atomically(const fs::path& file, const nlohmann::json& j) {
    fs::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error(tmp.string() + ": cannot write file");
        out << j.dump() << '\n';
    }
    fs::rename(tmp, file);
}

nlohmann::json read_json(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error(file.string() + ": missing checkpoint (run `train` first or pass --end-to-end)");
    return nlohmann::json::parse(in);
}

void write_reports(const RunConfig& cfg, const std::vector<ExperimentReport>& reports) {
    const fs::path dir = cfg.out_dir / "reports";
    fs::create_directories(dir);
    for (const auto& r : reports) {
        const std::string stem = std::string(to_string(r.arm)) + "_w" + std::to_string(r.window);
        r.write_json(dir / (stem + ".json"));
        r.write_curves(dir / (stem + "_roc.csv"), dir / (stem + "_pr.csv"));
    }
    std::printf("%-8s %-8s %-18s %-18s\n", "window", "arm", "AUROC", "AUPRC");
    for (const auto& r : reports) {
        std::printf("%-8u %-8s %.3f +/- %.3f      %.3f +/- %.3f\n", r.window, to_string(r.arm), r.mean_auroc,
                    r.std_auroc, r.mean_auprc, r.std_auprc);
    }
}

int cmd_synth(const Options& opt) {
    RunConfig cfg = resolve_config(opt);
    if (cfg.source != DataSource::Synthetic) throw ConfigError("synth requires data.source = synthetic");
    Dataset d = load_data(cfg);
    write_records(d.records, d.vocab, cfg.out_dir);
    std::printf("wrote %zu patients to %s\n", d.records.size(), cfg.out_dir.string().c_str());
    return 0;
}

int cmd_train(const Options& opt) {
    RunConfig cfg = resolve_config(opt);
    Dataset d = load_data(cfg);
    const auto folds = experiment_folds(d.records, cfg.experiment);
    for (auto window : cfg.windows) {
        const int jobs = static_cast<int>(std::max<std::size_t>(1, cfg.experiment.jobs));
        std::vector<std::string> errors(folds.size());
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
        for (long f = 0; f < static_cast<long>(folds.size()); ++f) {
            const auto fold = static_cast<std::size_t>(f);
            try {
                auto [train, test] = split_records(d.records, folds[fold]);
                FoldModel model = train_fold(train, cfg.arms, window, d.shape(), cfg.experiment, fold);
                const fs::path dir = fold_dir(cfg, window, fold);
                fs::create_directories(dir);
                write_json_atomically(dir / "normalizer.json", model.normalizer.to_json());
                if (model.hgm) write_json_atomically(dir / "hgm.json", model.hgm->to_json());
                for (const auto& [arm, params] : model.cnn) {
                    write_json_atomically(dir / (std::string("cnn_") + to_string(arm) + ".json"), params.to_json());
                }
            } catch (const std::exception& e) {
                errors[fold] = e.what();
            }
        }
        for (const auto& e : errors) {
            if (!e.empty()) throw std::runtime_error(e);
        }
    }
    std::printf("wrote checkpoints for %zu windows x %zu folds to %s\n", cfg.windows.size(), folds.size(),
                (cfg.out_dir / "checkpoints").string().c_str());
    return 0;
}

int cmd_run(const Options& opt) {
    RunConfig cfg = resolve_config(opt);
    Dataset d = load_data(cfg);
    std::vector<ExperimentReport> all;
    for (auto window : cfg.windows) {
        auto reports = run_experiments(d.records, cfg.arms, window, d.shape(), cfg.experiment);
        for (auto& r : reports) all.push_back(std::move(r));
    }
    write_reports(cfg, all);
    return 0;
}

int cmd_eval(const Options& opt) {
    if (opt.end_to_end) return cmd_run(opt);
    RunConfig cfg = resolve_config(opt);
    Dataset d = load_data(cfg);
    const auto folds = experiment_folds(d.records, cfg.experiment);
    std::vector<ExperimentReport> all;
    for (auto window : cfg.windows) {
        std::vector<ExperimentReport> reports(cfg.arms.size());
        for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
            reports[a].arm = cfg.arms[a];
            reports[a].window = window;
        }
        for (std::size_t fold = 0; fold < folds.size(); ++fold) {
            const fs::path dir = fold_dir(cfg, window, fold);
            FoldModel model;
            model.normalizer = LabNormalizer::from_json(read_json(dir / "normalizer.json"));
            if (fs::exists(dir / "hgm.json")) model.hgm = HgmParams::from_json(read_json(dir / "hgm.json"));
            for (Arm arm : cfg.arms) {
                model.cnn.emplace(arm, CnnParams::from_json(read_json(dir / (std::string("cnn_") + to_string(arm) + ".json"))));
            }
            auto [train, test] = split_records(d.records, folds[fold]);
            for (std::size_t a = 0; a < cfg.arms.size(); ++a) {
                auto rep = score_fold(model, cfg.arms[a], test, window, d.shape(), fold);
                if (rep) {
                    reports[a].folds.push_back(std::move(*rep));
                } else {
                    spdlog::warn("arm {} window {}: fold {} test set has a single class, skipped",
                                 to_string(cfg.arms[a]), window, fold);
                }
            }
        }
        for (auto& r : reports) {
            r.summarize();
            all.push_back(std::move(r));
        }
    }
    write_reports(cfg, all);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Heterogeneous graph embeddings + CNN for in-hospital mortality prediction"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "Run configuration file (INI)");
        sub->add_option("--seed", opt.seed, "Master seed (overrides run.seed)");
        sub->add_option("--out", opt.out, "Output directory (overrides run.out)");
        sub->add_option("--jobs", opt.jobs, "Folds processed concurrently")->check(CLI::PositiveNumber);
    };
    auto* synth = app.add_subcommand("synth", "Write synthetic events/diagnoses/outcomes CSVs");
    auto* train = app.add_subcommand("train", "Train HGM and CNN checkpoints per window and fold");
    auto* eval = app.add_subcommand("eval", "Score checkpoints under cross-validation and write reports");
    auto* run = app.add_subcommand("run", "Train and evaluate end to end");
    for (auto* sub : {synth, train, eval, run}) add_common(sub);
    eval->add_flag("--end-to-end", opt.end_to_end, "Train in memory instead of loading checkpoints");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "hgm_ehr: error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*synth) return cmd_synth(opt);
        if (*train) return cmd_train(opt);
        if (*eval) return cmd_eval(opt);
        if (*run) return cmd_run(opt);
    } catch (const ConfigError& e) {
        std::cerr << "hgm_ehr: error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "hgm_ehr: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#include "hgm_ehr/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <type_traits>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace hgm_ehr {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string> kKnownKeys = {
    "data.source", "data.events", "data.diagnoses", "data.outcomes", "data.vocab",
    "synth.patients", "synth.labs", "synth.diagnoses", "synth.horizon_hours", "synth.signal",
    "synth.prevalence", "synth.planted_diagnoses", "synth.planted_labs", "synth.background_diagnoses",
    "synth.test_rate", "synth.missing_hour_rate", "synth.repeat_rate",
    "run.seed", "run.windows", "run.arms", "run.folds", "run.jobs", "run.out",
    "hgm.dim", "hgm.epochs", "hgm.learning_rate", "hgm.min_learning_rate", "hgm.activation",
    "hgm.diag_samples", "hgm.lab_samples", "hgm.copatient_samples", "hgm.negatives",
    "cnn.filters", "cnn.kernel", "cnn.batch", "cnn.learning_rate", "cnn.epochs", "cnn.weight_decay", "cnn.class_weights",
};

const std::set<std::uint32_t> kAllowedWindows = {6, 12, 24, 48};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    boost::split(parts, s, boost::is_any_of(","));
    std::vector<std::string> out;
    for (auto& p : parts) {
        boost::trim(p);
        if (!p.empty()) out.push_back(p);
    }
    return out;
}

template <typename T>
void read(const pt::ptree& tree, const char* key, T& target) {
    auto node = tree.get_optional<std::string>(key);
    if (!node) return;
    std::string text = boost::trim_copy(*node);
    if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "yes") {
            target = true;
        } else if (text == "false" || text == "0" || text == "no") {
            target = false;
        } else {
            throw ConfigError(std::string(key) + ": expected true/false, got `" + text + "`");
        }
    } else if constexpr (std::is_same_v<T, std::string>) {
        target = text;
    } else {
        std::istringstream ss(text);
        T value{};
        if (!(ss >> value) || !ss.eof() || (std::is_unsigned_v<T> && text.starts_with("-"))) {
            throw ConfigError(std::string(key) + ": cannot parse `" + text + "`");
        }
        target = value;
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.empty() || path.is_absolute() || base.empty()) return path;
    return base / path;
}

}  // namespace

void RunConfig::validate() const {
    if (windows.empty()) throw ConfigError("run.windows must not be empty");
    for (auto w : windows) {
        if (!kAllowedWindows.count(w)) throw ConfigError("run.windows: " + std::to_string(w) + " not in {6,12,24,48}");
    }
    if (arms.empty()) throw ConfigError("run.arms must not be empty");
    if (experiment.folds < 2) throw ConfigError("run.folds must be at least 2");
    if (source == DataSource::Files && (events.empty() || diagnoses.empty() || outcomes.empty())) {
        throw ConfigError("data: events, diagnoses and outcomes are required when source = files");
    }
    try {
        if (source == DataSource::Synthetic) synth.validate();
        experiment.hgm.validate();
        experiment.cnn.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config: key `" + section + "` outside of a section");
        for (const auto& [key, value] : body) {
            if (!kKnownKeys.count(section + "." + key)) throw ConfigError("config: unknown key " + section + "." + key);
        }
    }

    RunConfig c;
    std::string text;
    text.clear();
    read(tree, "data.source", text);
    if (!text.empty()) {
        if (text == "synthetic") {
            c.source = DataSource::Synthetic;
        } else if (text == "files") {
            c.source = DataSource::Files;
        } else {
            throw ConfigError("data.source: expected synthetic or files, got `" + text + "`");
        }
    }
    for (auto [key, target] : {std::pair{"data.events", &c.events}, std::pair{"data.diagnoses", &c.diagnoses},
                               std::pair{"data.outcomes", &c.outcomes}, std::pair{"data.vocab", &c.vocab}}) {
        text.clear();
        read(tree, key, text);
        if (!text.empty()) *target = resolve(base_dir, text);
    }

    read(tree, "synth.patients", c.synth.n_patients);
    read(tree, "synth.labs", c.synth.n_labs);
    read(tree, "synth.diagnoses", c.synth.n_diagnoses);
    read(tree, "synth.horizon_hours", c.synth.horizon_hours);
    read(tree, "synth.signal", c.synth.signal);
    read(tree, "synth.prevalence", c.synth.prevalence);
    read(tree, "synth.planted_diagnoses", c.synth.planted_diagnoses);
    read(tree, "synth.planted_labs", c.synth.planted_labs);
    read(tree, "synth.background_diagnoses", c.synth.mean_background_diagnoses);
    read(tree, "synth.test_rate", c.synth.test_rate);
    read(tree, "synth.missing_hour_rate", c.synth.missing_hour_rate);
    read(tree, "synth.repeat_rate", c.synth.repeat_rate);

    read(tree, "run.seed", c.experiment.seed);
    read(tree, "run.folds", c.experiment.folds);
    read(tree, "run.jobs", c.experiment.jobs);
    text.clear();
    read(tree, "run.windows", text);
    if (!text.empty()) {
        c.windows.clear();
        for (const auto& w : split_list(text)) {
            std::uint32_t v = 0;
            std::istringstream ss(w);
            if (!(ss >> v) || !ss.eof()) throw ConfigError("run.windows: cannot parse `" + w + "`");
            c.windows.push_back(v);
        }
    }
    text.clear();
    read(tree, "run.arms", text);
    if (!text.empty()) {
        c.arms.clear();
        try {
            for (const auto& a : split_list(text)) c.arms.push_back(arm_from_string(a));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("run.arms: ") + e.what());
        }
    }
    text.clear();
    read(tree, "run.out", text);
    if (!text.empty()) c.out_dir = text;

    auto& h = c.experiment.hgm;
    read(tree, "hgm.dim", h.dim);
    read(tree, "hgm.epochs", h.epochs);
    read(tree, "hgm.learning_rate", h.learning_rate);
    read(tree, "hgm.min_learning_rate", h.min_learning_rate);
    text.clear();
    read(tree, "hgm.activation", text);
    if (!text.empty()) {
        try {
            h.activation = activation_from_string(text);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("hgm.activation: ") + e.what());
        }
    }
    read(tree, "hgm.diag_samples", h.sampler.n_diag);
    read(tree, "hgm.lab_samples", h.sampler.n_lab);
    read(tree, "hgm.copatient_samples", h.sampler.n_copatient);
    read(tree, "hgm.negatives", h.sampler.negatives);

    auto& n = c.experiment.cnn;
    read(tree, "cnn.filters", n.n_filters);
    read(tree, "cnn.kernel", n.kernel);
    read(tree, "cnn.batch", n.batch);
    read(tree, "cnn.learning_rate", n.learning_rate);
    read(tree, "cnn.epochs", n.epochs);
    read(tree, "cnn.weight_decay", n.weight_decay);
    read(tree, "cnn.class_weights", n.class_weights);

    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string() + ": cannot open config file");
    return parse_run_config(in, file.parent_path());
}

}  // namespace hgm_ehr

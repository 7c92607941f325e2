#include "hgm_ehr/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <cstdio>

#include <boost/tokenizer.hpp>

#include "hgm_ehr/rng.hpp"

namespace hgm_ehr {

namespace fs = std::filesystem;

namespace {

using Row = std::vector<std::string>;

class CsvReader {
   public:
    CsvReader(const fs::path& path, const std::vector<std::string>& expected_header)
        : path_(path), in_(path) {
        if (!in_) throw ParseError(path_.string() + ": cannot open file");
        Row header;
        if (!next(header)) throw ParseError(path_.string() + ":1: missing header");
        if (header != expected_header) {
            std::string want;
            for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
            throw ParseError(where() + ": expected header `" + want + "`");
        }
    }

    bool next(Row& row) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            row.clear();
            try {
                boost::tokenizer<boost::escaped_list_separator<char>> tok(line);
                for (const auto& field : tok) row.push_back(field);
            } catch (const boost::escaped_list_error& e) {
                throw ParseError(where() + ": " + e.what());
            }
            return true;
        }
        return false;
    }

    std::string where() const { return path_.string() + ":" + std::to_string(line_no_); }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(where() + ": " + what); }

    double to_double(const std::string& s) const {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
            fail("not a number: `" + s + "`");
        }
        return v;
    }

    std::uint32_t to_uint(const std::string& s) const {
        std::uint32_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size()) {
            fail("not a non-negative integer: `" + s + "`");
        }
        return v;
    }

   private:
    fs::path path_;
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\\\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Vocabulary Vocabulary::synthetic(std::size_t n_labs, std::size_t n_diagnoses) {
    Vocabulary v;
    char buf[32];
    for (std::size_t i = 0; i < n_labs; ++i) {
        std::snprintf(buf, sizeof(buf), "lab_%04zu", i);
        v.add_lab(buf);
    }
    for (std::size_t i = 0; i < n_diagnoses; ++i) {
        std::snprintf(buf, sizeof(buf), "dx_%04zu", i);
        v.add_diagnosis(buf);
    }
    return v;
}

std::uint32_t Vocabulary::add_lab(const std::string& name) {
    auto [it, inserted] = lab_index_.try_emplace(name, static_cast<std::uint32_t>(labs_.size()));
    if (inserted) labs_.push_back(name);
    return it->second;
}

std::uint32_t Vocabulary::add_diagnosis(const std::string& name) {
    auto [it, inserted] =
        diagnosis_index_.try_emplace(name, static_cast<std::uint32_t>(diagnoses_.size()));
    if (inserted) diagnoses_.push_back(name);
    return it->second;
}

std::optional<std::uint32_t> Vocabulary::find_lab(const std::string& name) const {
    auto it = lab_index_.find(name);
    if (it == lab_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::uint32_t> Vocabulary::find_diagnosis(const std::string& name) const {
    auto it = diagnosis_index_.find(name);
    if (it == diagnosis_index_.end()) return std::nullopt;
    return it->second;
}

nlohmann::json Vocabulary::to_json() const {
    return nlohmann::json{{"labs", labs_}, {"diagnoses", diagnoses_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    Vocabulary v;
    for (const auto& name : j.at("labs")) {
        std::string s = name.get<std::string>();
        if (v.find_lab(s)) throw ParseError("vocabulary: duplicate lab name `" + s + "`");
        v.add_lab(s);
    }
    for (const auto& name : j.at("diagnoses")) {
        std::string s = name.get<std::string>();
        if (v.find_diagnosis(s)) throw ParseError("vocabulary: duplicate diagnosis name `" + s + "`");
        v.add_diagnosis(s);
    }
    return v;
}

Vocabulary load_vocabulary(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ParseError(file.string() + ": cannot open file");
    try {
        return Vocabulary::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(file.string() + ": " + e.what());
    }
}

void save_vocabulary(const Vocabulary& vocab, const fs::path& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error(file.string() + ": cannot write file");
    out << vocab.to_json().dump(1) << "\n";
}

std::vector<PatientRecord> parse_records(const fs::path& events_file, const fs::path& diagnoses_file,
                                         const fs::path& outcomes_file, Vocabulary& vocab) {
    std::vector<PatientRecord> records;
    std::unordered_map<std::string, std::size_t> by_id;
    Row row;

    CsvReader outcomes(outcomes_file, {"patient_id", "died", "end_hour"});
    while (outcomes.next(row)) {
        if (row.size() != 3) outcomes.fail("expected 3 fields, got " + std::to_string(row.size()));
        if (row[0].empty()) outcomes.fail("empty patient_id");
        if (row[1] != "0" && row[1] != "1") outcomes.fail("died must be 0 or 1, got `" + row[1] + "`");
        PatientRecord rec;
        rec.patient_id = row[0];
        rec.died = row[1] == "1";
        rec.end_hour = outcomes.to_uint(row[2]);
        if (!by_id.emplace(rec.patient_id, records.size()).second) {
            outcomes.fail("duplicate patient `" + rec.patient_id + "`");
        }
        records.push_back(std::move(rec));
    }

    CsvReader events(events_file, {"patient_id", "hours_before_end", "lab_name", "value"});
    while (events.next(row)) {
        if (row.size() != 4) events.fail("expected 4 fields, got " + std::to_string(row.size()));
        auto it = by_id.find(row[0]);
        if (it == by_id.end()) events.fail("patient `" + row[0] + "` not in outcomes file");
        LabEvent ev;
        ev.patient_id = row[0];
        ev.hours_before_end = events.to_double(row[1]);
        if (ev.hours_before_end < 0.0) events.fail("hours_before_end must be non-negative");
        if (row[2].empty()) events.fail("empty lab_name");
        ev.lab_id = vocab.add_lab(row[2]);
        ev.value = events.to_double(row[3]);
        records[it->second].events.push_back(std::move(ev));
    }

    CsvReader diagnoses(diagnoses_file, {"patient_id", "diagnosis_name"});
    while (diagnoses.next(row)) {
        if (row.size() != 2) diagnoses.fail("expected 2 fields, got " + std::to_string(row.size()));
        auto it = by_id.find(row[0]);
        if (it == by_id.end()) diagnoses.fail("patient `" + row[0] + "` not in outcomes file");
        if (row[1].empty()) diagnoses.fail("empty diagnosis_name");
        records[it->second].diagnoses.push_back(vocab.add_diagnosis(row[1]));
    }
    for (auto& rec : records) {
        std::sort(rec.diagnoses.begin(), rec.diagnoses.end());
        rec.diagnoses.erase(std::unique(rec.diagnoses.begin(), rec.diagnoses.end()),
                            rec.diagnoses.end());
    }
    return records;
}

void write_records(const std::vector<PatientRecord>& records, const Vocabulary& vocab,
                   const fs::path& dir) {
    fs::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw std::runtime_error((dir / name).string() + ": cannot write file");
        return out;
    };
    std::ofstream events = open("events.csv");
    std::ofstream diagnoses = open("diagnoses.csv");
    std::ofstream outcomes = open("outcomes.csv");
    events << "patient_id,hours_before_end,lab_name,value\n";
    diagnoses << "patient_id,diagnosis_name\n";
    outcomes << "patient_id,died,end_hour\n";
    for (const auto& rec : records) {
        const std::string id = csv_field(rec.patient_id);
        outcomes << id << ',' << (rec.died ? 1 : 0) << ',' << rec.end_hour << '\n';
        for (const auto& ev : rec.events) {
            events << id << ',' << format_double(ev.hours_before_end) << ','
                   << csv_field(vocab.lab_name(ev.lab_id)) << ',' << format_double(ev.value) << '\n';
        }
        for (auto d : rec.diagnoses) diagnoses << id << ',' << csv_field(vocab.diagnosis_name(d)) << '\n';
    }
    save_vocabulary(vocab, dir / "vocab.json");
}

bool HourSnapshot::any_observed() const {
    return std::any_of(lab_observed.begin(), lab_observed.end(), [](auto m) { return m != 0; });
}

std::vector<HourSnapshot> bin_events(const PatientRecord& record, std::uint32_t window_hours,
                                     std::size_t n_labs) {
    std::vector<HourSnapshot> out(window_hours);
    for (std::uint32_t h = 0; h < window_hours; ++h) {
        out[h].patient_id = record.patient_id;
        out[h].hour = h;
        out[h].lab_values.assign(n_labs, kUnobservedFill);
        out[h].lab_observed.assign(n_labs, 0);
    }

    // (hour, lab, value) sorted so the within-bin sums do not depend on input order
    std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> in_window;
    for (const auto& ev : record.events) {
        if (ev.lab_id >= n_labs) {
            throw std::out_of_range("lab id " + std::to_string(ev.lab_id) + " outside vocabulary of " +
                                    std::to_string(n_labs));
        }
        if (!(ev.hours_before_end >= 0.0) || ev.hours_before_end >= window_hours) continue;
        auto hour = static_cast<std::uint32_t>(std::floor(ev.hours_before_end));
        in_window.emplace_back(hour, ev.lab_id, ev.value);
    }
    std::sort(in_window.begin(), in_window.end());

    std::size_t i = 0;
    while (i < in_window.size()) {
        auto [hour, lab, first] = in_window[i];
        double sum = 0.0;
        std::size_t count = 0;
        for (; i < in_window.size() && std::get<0>(in_window[i]) == hour &&
               std::get<1>(in_window[i]) == lab;
             ++i) {
            sum += std::get<2>(in_window[i]);
            ++count;
        }
        out[hour].lab_values[lab] = sum / static_cast<double>(count);
        out[hour].lab_observed[lab] = 1;
    }
    return out;
}

LabNormalizer::LabNormalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
    if (mean_.size() != stddev_.size()) throw std::invalid_argument("normalizer size mismatch");
}

LabNormalizer LabNormalizer::fit(std::span<const std::vector<HourSnapshot>> patients,
                                 std::size_t n_labs) {
    std::vector<double> sum(n_labs, 0.0), sum_sq(n_labs, 0.0);
    std::vector<std::size_t> count(n_labs, 0);
    for (const auto& snapshots : patients) {
        for (const auto& s : snapshots) {
            for (std::size_t l = 0; l < n_labs; ++l) {
                if (!s.lab_observed[l]) continue;
                sum[l] += s.lab_values[l];
                ++count[l];
            }
        }
    }
    std::vector<double> mean(n_labs, 0.0), stddev(n_labs, 1.0);
    for (std::size_t l = 0; l < n_labs; ++l) {
        if (count[l] > 0) mean[l] = sum[l] / static_cast<double>(count[l]);
    }
    for (const auto& snapshots : patients) {
        for (const auto& s : snapshots) {
            for (std::size_t l = 0; l < n_labs; ++l) {
                if (!s.lab_observed[l]) continue;
                double d = s.lab_values[l] - mean[l];
                sum_sq[l] += d * d;
            }
        }
    }
    for (std::size_t l = 0; l < n_labs; ++l) {
        if (count[l] > 1) {
            double sd = std::sqrt(sum_sq[l] / static_cast<double>(count[l] - 1));
            if (sd > 1e-12) stddev[l] = sd;
        }
    }
    return LabNormalizer(std::move(mean), std::move(stddev));
}

void LabNormalizer::apply(HourSnapshot& snapshot) const {
    if (snapshot.lab_values.size() != mean_.size()) {
        throw std::invalid_argument("normalizer fitted for " + std::to_string(mean_.size()) +
                                    " labs, snapshot has " +
                                    std::to_string(snapshot.lab_values.size()));
    }
    for (std::size_t l = 0; l < mean_.size(); ++l) {
        snapshot.lab_values[l] =
            snapshot.lab_observed[l] ? (snapshot.lab_values[l] - mean_[l]) / stddev_[l] : kUnobservedFill;
    }
}

void LabNormalizer::apply(std::vector<HourSnapshot>& snapshots) const {
    for (auto& s : snapshots) apply(s);
}

nlohmann::json LabNormalizer::to_json() const {
    return nlohmann::json{{"mean", mean_}, {"stddev", stddev_}};
}

LabNormalizer LabNormalizer::from_json(const nlohmann::json& j) {
    return LabNormalizer(j.at("mean").get<std::vector<double>>(),
                         j.at("stddev").get<std::vector<double>>());
}

void SynthConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("synthetic config: ") + what);
    };
    require(n_patients >= 2, "n_patients must be at least 2");
    require(n_labs >= 1, "n_labs must be positive");
    require(n_diagnoses >= 1, "n_diagnoses must be positive");
    require(horizon_hours >= 1, "horizon_hours must be positive");
    require(signal >= 0.0 && signal <= 1.0, "signal must lie in [0, 1]");
    require(prevalence > 0.0 && prevalence < 1.0, "prevalence must lie in (0, 1)");
    require(planted_diagnoses <= n_diagnoses, "planted_diagnoses exceeds n_diagnoses");
    require(planted_labs <= n_labs, "planted_labs exceeds n_labs");
    require(mean_background_diagnoses >= 0.0, "mean_background_diagnoses must be non-negative");
    require(test_rate > 0.0 && test_rate <= 1.0, "test_rate must lie in (0, 1]");
    require(missing_hour_rate >= 0.0 && missing_hour_rate < 1.0, "missing_hour_rate must lie in [0, 1)");
    require(repeat_rate >= 0.0 && repeat_rate <= 1.0, "repeat_rate must lie in [0, 1]");
}

std::vector<PatientRecord> generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const std::size_t L = config.n_labs;
    const std::size_t D = config.n_diagnoses;

    // Which labs and diagnoses carry the signal, plus per-lab reference ranges.
    std::vector<std::uint32_t> lab_order(L), diag_order(D);
    std::iota(lab_order.begin(), lab_order.end(), 0u);
    std::iota(diag_order.begin(), diag_order.end(), 0u);
    rng.shuffle(std::span(lab_order));
    rng.shuffle(std::span(diag_order));
    std::vector<std::uint8_t> planted_lab(L, 0), planted_diag(D, 0);
    std::vector<double> drift_sign(L, 0.0);
    for (std::size_t i = 0; i < config.planted_labs; ++i) {
        planted_lab[lab_order[i]] = 1;
        drift_sign[lab_order[i]] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    }
    for (std::size_t i = 0; i < config.planted_diagnoses; ++i) planted_diag[diag_order[i]] = 1;
    std::vector<double> lab_center(L), lab_scale(L);
    for (std::size_t l = 0; l < L; ++l) {
        lab_center[l] = rng.uniform(5.0, 150.0);
        lab_scale[l] = lab_center[l] * rng.uniform(0.05, 0.2);
    }

    const std::size_t background = D - config.planted_diagnoses;
    const double background_p =
        background == 0 ? 0.0 : std::min(1.0, config.mean_background_diagnoses / background);
    const double base_logit = std::log(config.prevalence / (1.0 - config.prevalence));
    const double H = config.horizon_hours;

    std::vector<PatientRecord> records(config.n_patients);
    char id[32];
    for (std::size_t p = 0; p < config.n_patients; ++p) {
        PatientRecord& rec = records[p];
        std::snprintf(id, sizeof(id), "P%06zu", p);
        rec.patient_id = id;
        const double risk = rng.normal();

        for (std::size_t d = 0; d < D; ++d) {
            double prob = planted_diag[d] ? sigmoid(-2.5 + 2.5 * risk) : background_p;
            if (rng.bernoulli(prob)) rec.diagnoses.push_back(static_cast<std::uint32_t>(d));
        }
        if (rec.diagnoses.empty()) {
            rec.diagnoses.push_back(static_cast<std::uint32_t>(rng.uniform_index(D)));
        }

        for (std::uint32_t h = 0; h < config.horizon_hours; ++h) {
            if (rng.bernoulli(config.missing_hour_rate)) continue;
            // drift ramps up toward the endpoint
            const double ramp = (H - h) / H;
            for (std::size_t l = 0; l < L; ++l) {
                double rate = config.test_rate;
                if (planted_lab[l]) rate = std::min(1.0, rate * (1.0 + 0.5 * sigmoid(2.0 * risk)));
                if (!rng.bernoulli(rate)) continue;
                int draws = rng.bernoulli(config.repeat_rate) ? 2 : 1;
                for (int k = 0; k < draws; ++k) {
                    double z = 0.8 * rng.normal();
                    if (planted_lab[l]) z += drift_sign[l] * risk * (0.5 + 1.5 * ramp);
                    LabEvent ev;
                    ev.patient_id = rec.patient_id;
                    ev.hours_before_end = h + rng.uniform();
                    ev.lab_id = static_cast<std::uint32_t>(l);
                    ev.value = lab_center[l] + lab_scale[l] * z;
                    rec.events.push_back(std::move(ev));
                }
            }
        }

        const double logit = base_logit + config.signal * 3.0 * risk;
        rec.died = rng.bernoulli(sigmoid(logit));
        rec.end_hour = config.horizon_hours + static_cast<std::uint32_t>(rng.uniform_index(96));
    }
    return records;
}

}  // namespace hgm_ehr

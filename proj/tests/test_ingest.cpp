#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "hgm_ehr/ingest.hpp"
#include "hgm_ehr/metrics.hpp"
#include "hgm_ehr/rng.hpp"
#include "test_util.hpp"

using namespace hgm_ehr;
using test_util::event;

namespace {

struct CsvFixture {
    std::filesystem::path dir;
    explicit CsvFixture(const std::string& name, const std::string& events, const std::string& diagnoses,
                        const std::string& outcomes)
        : dir(test_util::temp_dir(name)) {
        test_util::write_file(dir / "events.csv", events);
        test_util::write_file(dir / "diagnoses.csv", diagnoses);
        test_util::write_file(dir / "outcomes.csv", outcomes);
    }
    std::vector<PatientRecord> parse(Vocabulary& v) const {
        return parse_records(dir / "events.csv", dir / "diagnoses.csv", dir / "outcomes.csv", v);
    }
};

const std::string kEventsHeader = "patient_id,hours_before_end,lab_name,value\n";
const std::string kDiagHeader = "patient_id,diagnosis_name\n";
const std::string kOutcomesHeader = "patient_id,died,end_hour\n";

}  // namespace

TEST_CASE("parse_records maps an outcome without events to an empty record") {
    CsvFixture f("no_events", kEventsHeader, kDiagHeader, kOutcomesHeader + "p1,1,50\n");
    Vocabulary v;
    auto recs = f.parse(v);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].patient_id == "p1");
    CHECK(recs[0].died);
    CHECK(recs[0].end_hour == 50);
    CHECK(recs[0].events.empty());
}

TEST_CASE("parse_records keeps each event row") {
    CsvFixture f("two_events", kEventsHeader + "p1,2.0,glucose,101\np1,3.0,glucose,99.5\n",
                 kDiagHeader + "p1,sepsis\np1,sepsis\np1,aki\n", kOutcomesHeader + "p1,0,12\n");
    Vocabulary v;
    auto recs = f.parse(v);
    REQUIRE(recs[0].events.size() == 2);
    CHECK(recs[0].events[0].hours_before_end == 2.0);
    CHECK(recs[0].events[1].value == 99.5);
    CHECK(recs[0].diagnoses.size() == 2);  // duplicates collapse
    CHECK(v.n_labs() == 1);
    CHECK(v.n_diagnoses() == 2);
}

TEST_CASE("409 distinct lab names give a 409-lab vocabulary") {
    std::string events = kEventsHeader;
    for (int i = 0; i < 409; ++i) events += "p1,1.5,lab test " + std::to_string(i) + ",1\n";
    CsvFixture f("vocab409", events, kDiagHeader, kOutcomesHeader + "p1,0,10\n");
    Vocabulary v;
    f.parse(v);
    CHECK(v.n_labs() == 409);
}

TEST_CASE("parse errors name the file and line") {
    SUBCASE("bad number") {
        CsvFixture f("bad_num", kEventsHeader + "p1,1.0,na,1\np1,abc,na,2\n", kDiagHeader, kOutcomesHeader + "p1,0,3\n");
        Vocabulary v;
        try {
            f.parse(v);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("events.csv:3") != std::string::npos);
        }
    }
    SUBCASE("wrong field count") {
        CsvFixture f("bad_fields", kEventsHeader, kDiagHeader, kOutcomesHeader + "p1,0\n");
        Vocabulary v;
        CHECK_THROWS_AS(f.parse(v), ParseError);
    }
    SUBCASE("bad label") {
        CsvFixture f("bad_label", kEventsHeader, kDiagHeader, kOutcomesHeader + "p1,2,3\n");
        Vocabulary v;
        CHECK_THROWS_WITH_AS(f.parse(v), doctest::Contains("outcomes.csv:2"), ParseError);
    }
    SUBCASE("negative hours") {
        CsvFixture f("neg_hours", kEventsHeader + "p1,-0.5,na,1\n", kDiagHeader, kOutcomesHeader + "p1,0,3\n");
        Vocabulary v;
        CHECK_THROWS_AS(f.parse(v), ParseError);
    }
    SUBCASE("wrong header") {
        CsvFixture f("bad_header", "patient,hours,lab,value\n", kDiagHeader, kOutcomesHeader);
        Vocabulary v;
        CHECK_THROWS_WITH_AS(f.parse(v), doctest::Contains("events.csv:1"), ParseError);
    }
}

TEST_CASE("events for a patient missing from outcomes are an error") {
    CsvFixture f("orphan", kEventsHeader + "p2,1.0,na,140\n", kDiagHeader, kOutcomesHeader + "p1,0,3\n");
    Vocabulary v;
    CHECK_THROWS_WITH_AS(f.parse(v), doctest::Contains("p2"), ParseError);
}

TEST_CASE("quoted names with commas survive a write/parse cycle") {
    Vocabulary v;
    v.add_lab("Sodium, whole blood");
    v.add_diagnosis("Diabetes \"type 2\"");
    PatientRecord r{"p,1", {event("p,1", 0.25, 0, 139.5)}, {0}, true, 30};
    auto dir = test_util::temp_dir("quoted");
    write_records({r}, v, dir);
    Vocabulary v2;
    auto back = parse_records(dir / "events.csv", dir / "diagnoses.csv", dir / "outcomes.csv", v2);
    REQUIRE(back.size() == 1);
    CHECK(back[0].patient_id == "p,1");
    CHECK(v2.lab_name(0) == "Sodium, whole blood");
    CHECK(v2.diagnosis_name(0) == "Diabetes \"type 2\"");
}

TEST_CASE("bin_events averages repeated measurements within an hour") {
    PatientRecord r{"p", {event("p", 3.2, 5, 2.0), event("p", 3.8, 5, 4.0)}, {}, false, 20};
    auto snaps = bin_events(r, 6, 10);
    REQUIRE(snaps.size() == 6);
    CHECK(snaps[3].lab_observed[5] == 1);
    CHECK(snaps[3].lab_values[5] == 3.0);
    CHECK(snaps[3].hour == 3);
    for (std::uint32_t h = 0; h < 6; ++h) {
        if (h != 3) CHECK_FALSE(snaps[h].any_observed());
    }
}

TEST_CASE("bin_events on an empty record yields unobserved snapshots") {
    PatientRecord r{"p", {}, {}, false, 0};
    auto snaps = bin_events(r, 6, 4);
    REQUIRE(snaps.size() == 6);
    for (const auto& s : snaps) {
        CHECK_FALSE(s.any_observed());
        CHECK(s.lab_values == std::vector<double>(4, kUnobservedFill));
    }
}

TEST_CASE("bin_events drops events outside the window and uses half-open bins") {
    PatientRecord r{"p", {event("p", 7.5, 0, 1.0), event("p", 6.0, 1, 1.0), event("p", 1.0, 2, 5.0),
                          event("p", 0.0, 3, 7.0), event("p", 5.999, 3, 9.0)},
                    {}, false, 0};
    auto snaps = bin_events(r, 6, 4);
    for (const auto& s : snaps) {
        CHECK(s.lab_observed[0] == 0);
        CHECK(s.lab_observed[1] == 0);
    }
    CHECK(snaps[1].lab_observed[2] == 1);
    CHECK(snaps[0].lab_observed[2] == 0);
    CHECK(snaps[0].lab_values[3] == 7.0);
    CHECK(snaps[5].lab_values[3] == 9.0);
}

TEST_CASE("bin_events rejects lab ids outside the vocabulary") {
    PatientRecord r{"p", {event("p", 1.0, 7, 1.0)}, {}, false, 0};
    CHECK_THROWS(bin_events(r, 6, 7));
}

TEST_CASE("bin_events properties on random records") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::uint32_t window = static_cast<std::uint32_t>(1 + rng.uniform_index(24));
        const std::size_t L = 1 + rng.uniform_index(8);
        PatientRecord r{"p", {}, {}, false, 0};
        const std::size_t n = rng.uniform_index(40);
        bool distinct_cells = true;
        std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;
        std::size_t in_window = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double h = rng.uniform(0.0, 30.0);
            auto lab = static_cast<std::uint32_t>(rng.uniform_index(L));
            r.events.push_back(event("p", h, lab, rng.normal()));
            if (h < window) {
                ++in_window;
                cells.emplace_back(static_cast<std::uint32_t>(h), lab);
            }
        }
        std::sort(cells.begin(), cells.end());
        distinct_cells = std::adjacent_find(cells.begin(), cells.end()) == cells.end();

        auto snaps = bin_events(r, window, L);
        CHECK(snaps.size() == window);
        std::size_t observed = 0;
        for (const auto& s : snaps) observed += std::count(s.lab_observed.begin(), s.lab_observed.end(), 1);
        CHECK(observed <= in_window);
        if (distinct_cells) CHECK(observed == in_window);

        PatientRecord shuffled = r;
        rng.shuffle(std::span(shuffled.events));
        CHECK(bin_events(shuffled, window, L) == snaps);
    }
}

TEST_CASE("LabNormalizer z-scores observed entries and leaves gaps at the fill value") {
    std::vector<std::vector<HourSnapshot>> train(1);
    PatientRecord r{"p", {event("p", 0.5, 0, 1.0), event("p", 1.5, 0, 3.0), event("p", 2.5, 0, 5.0),
                          event("p", 0.5, 1, 4.0), event("p", 1.5, 1, 4.0)},
                    {}, false, 0};
    train[0] = bin_events(r, 4, 3);
    auto norm = LabNormalizer::fit(train, 3);
    CHECK(norm.mean()[0] == doctest::Approx(3.0));
    CHECK(norm.stddev()[0] == doctest::Approx(2.0));
    CHECK(norm.stddev()[1] == 1.0);  // zero spread falls back to 1
    CHECK(norm.stddev()[2] == 1.0);  // never observed
    auto snaps = train[0];
    norm.apply(snaps);
    CHECK(snaps[0].lab_values[0] == doctest::Approx(-1.0));
    CHECK(snaps[2].lab_values[0] == doctest::Approx(1.0));
    CHECK(snaps[3].lab_values[0] == kUnobservedFill);
    CHECK(snaps[0].lab_values[1] == 0.0);

    auto back = LabNormalizer::from_json(norm.to_json());
    CHECK(back.mean() == norm.mean());
    CHECK(back.stddev() == norm.stddev());
}

TEST_CASE("vocabulary JSON keeps index order") {
    Vocabulary v;
    v.add_lab("b");
    v.add_lab("a");
    v.add_diagnosis("z");
    auto j = v.to_json();
    CHECK(j.dump() == R"({"diagnoses":["z"],"labs":["b","a"]})");
    CHECK(Vocabulary::from_json(j) == v);
    auto dup = nlohmann::json{{"labs", {"a", "a"}}, {"diagnoses", nlohmann::json::array()}};
    CHECK_THROWS_AS(Vocabulary::from_json(dup), ParseError);
}

TEST_CASE("generate_synthetic is a pure function of config and seed") {
    SynthConfig c;
    c.n_patients = 60;
    auto a = generate_synthetic(c, 5);
    auto b = generate_synthetic(c, 5);
    auto vocab = Vocabulary::synthetic(c.n_labs, c.n_diagnoses);
    auto da = test_util::temp_dir("synth_a");
    auto db = test_util::temp_dir("synth_b");
    write_records(a, vocab, da);
    write_records(b, vocab, db);
    for (const char* f : {"events.csv", "diagnoses.csv", "outcomes.csv"}) {
        CHECK(test_util::read_file(da / f) == test_util::read_file(db / f));
    }
    auto c2 = generate_synthetic(c, 6);
    CHECK(test_util::read_file(da / "events.csv").size() > 0);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].events.size() != c2[i].events.size();
    CHECK(differs);
}

TEST_CASE("generate_synthetic round-trips through the CSV files") {
    SynthConfig c;
    c.n_patients = 40;
    auto recs = generate_synthetic(c, 9);
    auto vocab = Vocabulary::synthetic(c.n_labs, c.n_diagnoses);
    auto dir = test_util::temp_dir("synth_rt");
    write_records(recs, vocab, dir);
    Vocabulary v2 = load_vocabulary(dir / "vocab.json");
    auto back = parse_records(dir / "events.csv", dir / "diagnoses.csv", dir / "outcomes.csv", v2);
    CHECK(v2 == vocab);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].patient_id == recs[i].patient_id);
        CHECK(back[i].died == recs[i].died);
        CHECK(back[i].end_hour == recs[i].end_hour);
        CHECK(back[i].diagnoses == recs[i].diagnoses);
        REQUIRE(back[i].events.size() == recs[i].events.size());
        for (std::size_t e = 0; e < recs[i].events.size(); ++e) {
            CHECK(back[i].events[e].hours_before_end == recs[i].events[e].hours_before_end);
            CHECK(back[i].events[e].lab_id == recs[i].events[e].lab_id);
            CHECK(back[i].events[e].value == recs[i].events[e].value);
        }
    }
}

TEST_CASE("generate_synthetic rejects invalid configs") {
    SynthConfig c;
    c.signal = 1.5;
    CHECK_THROWS_AS(generate_synthetic(c, 1), std::invalid_argument);
    c = SynthConfig{};
    c.planted_diagnoses = c.n_diagnoses + 1;
    CHECK_THROWS_AS(generate_synthetic(c, 1), std::invalid_argument);
    c = SynthConfig{};
    c.prevalence = 0.0;
    CHECK_THROWS_AS(generate_synthetic(c, 1), std::invalid_argument);
    c = SynthConfig{};
    c.n_patients = 1;
    CHECK_THROWS_AS(generate_synthetic(c, 1), std::invalid_argument);
}

TEST_CASE("zero signal makes labels independent of the data") {
    SynthConfig c;
    c.n_patients = 4000;
    c.signal = 0.0;
    c.horizon_hours = 12;
    auto recs = generate_synthetic(c, 21);
    std::vector<double> n_diag, n_events;
    std::vector<std::uint8_t> labels;
    for (const auto& r : recs) {
        n_diag.push_back(static_cast<double>(r.diagnoses.size()));
        n_events.push_back(static_cast<double>(r.events.size()));
        labels.push_back(r.died);
    }
    CHECK(auroc(n_diag, labels) == doctest::Approx(0.5).epsilon(0.1));
    CHECK(auroc(n_events, labels) == doctest::Approx(0.5).epsilon(0.1));
}

// Independent baseline: L2-regularised logistic regression on diagnosis
// multi-hots, fitted by full-batch gradient descent on a 60/40 split.
TEST_CASE("full signal is recoverable from diagnoses by logistic regression") {
    SynthConfig c;
    c.n_patients = 500;
    c.n_labs = 30;
    c.n_diagnoses = 50;
    c.signal = 1.0;
    auto recs = generate_synthetic(c, 3);
    const std::size_t n_train = 300, D = c.n_diagnoses;
    std::vector<double> w(D + 1, 0.0);
    for (int it = 0; it < 2000; ++it) {
        std::vector<double> g(D + 1, 0.0);
        for (std::size_t i = 0; i < n_train; ++i) {
            double z = w[D];
            for (auto d : recs[i].diagnoses) z += w[d];
            double p = 1.0 / (1.0 + std::exp(-z));
            double err = p - (recs[i].died ? 1.0 : 0.0);
            for (auto d : recs[i].diagnoses) g[d] += err;
            g[D] += err;
        }
        for (std::size_t j = 0; j <= D; ++j) w[j] -= 0.5 * (g[j] / n_train + (j < D ? 1e-3 * w[j] : 0.0));
    }
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = n_train; i < recs.size(); ++i) {
        double z = w[D];
        for (auto d : recs[i].diagnoses) z += w[d];
        scores.push_back(z);
        labels.push_back(recs[i].died);
    }
    double a = auroc(scores, labels);
    MESSAGE("held-out logistic regression AUROC " << a);
    CHECK(a > 0.8);
}

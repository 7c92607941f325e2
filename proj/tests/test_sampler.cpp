#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "hgm_ehr/sampler.hpp"
#include "test_util.hpp"

using namespace hgm_ehr;
using test_util::event;

namespace {

std::vector<PatientRecord> random_records(std::uint64_t seed) {
    SynthConfig c;
    c.n_patients = 40;
    c.n_labs = 8;
    c.n_diagnoses = 12;
    c.planted_diagnoses = 3;
    c.planted_labs = 2;
    c.horizon_hours = 8;
    c.mean_background_diagnoses = 1.5;
    return generate_synthetic(c, seed);
}

bool one_hop(const HeteroGraph& g, NodeId center, NodeId other) {
    auto nb = neighbors(g, center, other.type);
    return std::find(nb.begin(), nb.end(), other) != nb.end();
}

}  // namespace

TEST_CASE("defaults give 10 + 10 + 10 positives and a temporal node") {
    std::vector<PatientRecord> recs{
        {"a", {event("a", 2.5, 0, 1.0), event("a", 2.2, 1, 1.0)}, {0, 1}, false, 10},
        {"b", {}, {1}, true, 10},
        {"c", {}, {2}, true, 10},
    };
    auto g = build_graph(recs, 3, 3, 6);
    SamplerConfig cfg;
    Rng rng(5);
    auto s = sample_context(g, g.patient_hour(0, 2), cfg, rng);
    CHECK(s.pos_diagnoses.size() == 10);
    CHECK(s.pos_labs.size() == 10);
    CHECK(s.pos_patients.size() == 10);
    REQUIRE(s.pos_temporal.has_value());
    CHECK(*s.pos_temporal == g.patient_hour(0, 1));
    CHECK(s.n_positives() == 31);
    for (const auto& n : s.neg_diagnoses) CHECK(n.size() == 5);
    for (const auto& n : s.neg_labs) CHECK(n.size() == 5);
    for (const auto& n : s.neg_patients) CHECK(n.size() == 5);
    CHECK(s.neg_temporal.size() == 5);
}

TEST_CASE("hour 0 has no temporal positive") {
    std::vector<PatientRecord> recs{{"a", {}, {0}, false, 10}, {"b", {}, {1}, false, 10}};
    auto g = build_graph(recs, 1, 2, 6);
    Rng rng(1);
    auto s = sample_context(g, g.patient_hour(0, 0), SamplerConfig{}, rng);
    CHECK_FALSE(s.pos_temporal.has_value());
    CHECK(s.neg_temporal.empty());
}

TEST_CASE("single diagnosis neighbor repeats") {
    std::vector<PatientRecord> recs{{"a", {}, {2}, false, 10}};
    auto g = build_graph(recs, 1, 4, 6);
    Rng rng(1);
    auto s = sample_context(g, g.patient_hour(0, 3), SamplerConfig{}, rng);
    CHECK(s.pos_diagnoses == std::vector<NodeId>(10, NodeId{NodeType::Diagnosis, 2}));
    CHECK(s.pos_labs.empty());
    // no other patient shares diagnosis 2
    CHECK(s.pos_patients.empty());
}

TEST_CASE("untrainable center") {
    std::vector<PatientRecord> recs{{"a", {}, {}, false, 10}};
    auto g = build_graph(recs, 1, 1, 6);
    Rng rng(1);
    CHECK_THROWS_AS(sample_context(g, g.patient_hour(0, 0), SamplerConfig{}, rng), SamplingError);
    CHECK_THROWS_AS(sample_context(g, {NodeType::Lab, 0}, SamplerConfig{}, rng), SamplingError);
}

TEST_CASE("config counts must be positive") {
    SamplerConfig c;
    c.negatives = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("negative diagnoses come from the complement") {
    std::vector<PatientRecord> recs{{"a", {}, {1, 3}, false, 10}};
    auto g = build_graph(recs, 1, 5, 6);
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        auto draws = sample_negatives(g, g.patient_hour(0, 0), NodeType::Diagnosis, 3, rng);
        REQUIRE(draws.size() == 3);
        for (auto d : draws) CHECK((d.index == 0 || d.index == 2 || d.index == 4));
    }
}

TEST_CASE("negative draws are uniform over the eligible pool") {
    std::vector<PatientRecord> recs{{"a", {event("a", 0.5, 4, 1.0)}, {1, 3}, false, 10}};
    auto g = build_graph(recs, 9, 5, 6);
    Rng rng(2024);
    constexpr std::size_t n = 100000;

    auto check_uniform = [&](NodeType type, std::vector<std::uint32_t> pool) {
        std::map<std::uint32_t, std::size_t> counts;
        for (auto d : sample_negatives(g, g.patient_hour(0, 0), type, n, rng)) ++counts[d.index];
        CHECK(counts.size() == pool.size());
        const double p = 1.0 / static_cast<double>(pool.size());
        const double sigma = std::sqrt(n * p * (1 - p));
        double chi2 = 0;
        for (auto v : pool) {
            const double diff = static_cast<double>(counts[v]) - n * p;
            CHECK(std::abs(diff) < 3 * sigma);
            chi2 += diff * diff / (n * p);
        }
        return chi2;
    };
    // chi-square 99.9% quantiles: df=2 -> 13.82, df=7 -> 24.32
    CHECK(check_uniform(NodeType::Diagnosis, {0, 2, 4}) < 13.82);
    CHECK(check_uniform(NodeType::Lab, {0, 1, 2, 3, 5, 6, 7, 8}) < 24.32);
}

TEST_CASE("empty negative pools") {
    std::vector<PatientRecord> recs{{"a", {event("a", 0.5, 0, 1.0)}, {0, 1, 2, 3, 4}, false, 10},
                                    {"b", {}, {0}, false, 10}};
    auto g = build_graph(recs, 1, 5, 6);
    Rng rng(1);
    const auto center = g.patient_hour(*g.ordinal_of("a"), 0);
    CHECK_THROWS_AS(sample_negatives(g, center, NodeType::Diagnosis, 3, rng), SamplingError);
    CHECK_THROWS_AS(sample_negatives(g, center, NodeType::Lab, 3, rng), SamplingError);
    CHECK_THROWS_AS(sample_negatives(g, center, NodeType::PatientHour, 3, rng), SamplingError);
    // inside a context the lists stay empty
    auto s = sample_context(g, center, SamplerConfig{}, rng);
    CHECK(s.pos_diagnoses.size() == 10);
    for (const auto& n : s.neg_diagnoses) CHECK(n.empty());
    for (const auto& n : s.neg_labs) CHECK(n.empty());
}

TEST_CASE("positives satisfy and negatives fail the neighborhood predicate") {
    auto recs = random_records(31);
    auto g = build_graph(recs, 8, 12, 8);
    Rng rng(77);
    SamplerConfig cfg;
    std::size_t contexts = 0;
    for (std::uint32_t ph = 0; ph < g.n_patient_hours(); ++ph) {
        const NodeId c{NodeType::PatientHour, ph};
        const auto p = g.patient_of(c);
        if (g.diagnoses_of(p).empty() && g.labs_tested(c).empty()) continue;
        auto s = sample_context(g, c, cfg, rng);
        ++contexts;
        for (auto d : s.pos_diagnoses) CHECK(one_hop(g, c, d));
        for (auto l : s.pos_labs) CHECK(one_hop(g, c, l));
        for (auto q : s.pos_patients) {
            CHECK(g.patient_of(q) != p);
            CHECK(g.share_diagnosis(p, g.patient_of(q)));
        }
        if (s.pos_temporal) CHECK(*s.pos_temporal == *g.temporal_next(c));
        for (const auto& list : s.neg_diagnoses) {
            for (auto d : list) CHECK_FALSE(one_hop(g, c, d));
        }
        for (const auto& list : s.neg_labs) {
            for (auto l : list) CHECK_FALSE(one_hop(g, c, l));
        }
        auto unrelated = [&](NodeId q) { return g.patient_of(q) != p && !g.share_diagnosis(p, g.patient_of(q)); };
        for (const auto& list : s.neg_patients) {
            for (auto q : list) CHECK(unrelated(q));
        }
        for (auto q : s.neg_temporal) CHECK(unrelated(q));
        CHECK(s.neg_diagnoses.size() == s.pos_diagnoses.size());
        CHECK(s.neg_labs.size() == s.pos_labs.size());
        CHECK(s.neg_patients.size() == s.pos_patients.size());
    }
    CHECK(contexts > 100);
}

TEST_CASE("same seed gives the same samples and Sampler matches sample_context") {
    auto recs = random_records(8);
    auto g = build_graph(recs, 8, 12, 8);
    SamplerConfig cfg;
    cfg.seed = 1234;
    Rng r1(cfg.seed), r2(cfg.seed);
    Sampler sampler(g, cfg);
    for (std::uint32_t ph = 0; ph < g.n_patient_hours(); ++ph) {
        const NodeId c{NodeType::PatientHour, ph};
        if (g.diagnoses_of(g.patient_of(c)).empty() && g.labs_tested(c).empty()) continue;
        auto a = sample_context(g, c, cfg, r1);
        auto b = sample_context(g, c, cfg, r2);
        CHECK(a == b);
        CHECK(sampler.sample(c) == a);
    }
}

#include <doctest.h>

#include <algorithm>
#include <set>

#include "hgm_ehr/graph.hpp"
#include "hgm_ehr/rng.hpp"
#include "test_util.hpp"

using namespace hgm_ehr;
using test_util::event;

namespace {

std::set<std::pair<std::string, std::uint32_t>> tested_edges(const HeteroGraph& g) {
    // (patient_id:hour, lab) so different ordinal assignments compare equal
    std::set<std::pair<std::string, std::uint32_t>> out;
    for (std::uint32_t i = 0; i < g.n_patient_hours(); ++i) {
        NodeId n{NodeType::PatientHour, i};
        for (auto l : g.labs_tested(n)) {
            out.emplace(g.patient_id(g.patient_of(n)) + ":" + std::to_string(g.hour_of(n)), l);
        }
    }
    return out;
}

std::vector<PatientRecord> random_records(std::uint64_t seed, std::size_t n, std::size_t L, std::size_t D) {
    SynthConfig c;
    c.n_patients = n;
    c.n_labs = L;
    c.n_diagnoses = D;
    c.planted_diagnoses = std::min<std::size_t>(3, D);
    c.planted_labs = std::min<std::size_t>(2, L);
    c.horizon_hours = 8;
    return generate_synthetic(c, seed);
}

}  // namespace

TEST_CASE("one patient with two diagnoses") {
    std::vector<PatientRecord> recs{{"p", {}, {1, 4}, false, 10}};
    auto g = build_graph(recs, 3, 5, 6);
    CHECK(g.n_nodes(NodeType::PatientHour) == 6);
    CHECK(g.n_nodes(NodeType::Lab) == 3);
    CHECK(g.n_nodes(NodeType::Diagnosis) == 5);
    CHECK(g.diagnoses_of(0) == std::vector<std::uint32_t>{1, 4});
    for (std::uint32_t h = 0; h < 6; ++h) {
        CHECK(neighbors(g, g.patient_hour(0, h), NodeType::Diagnosis).size() == 2);
    }
}

TEST_CASE("tested edges are per hour") {
    std::vector<PatientRecord> recs{{"p", {event("p", 2.5, 3, 1.0)}, {}, false, 10}};
    auto g = build_graph(recs, 5, 1, 6);
    auto edges = tested_edges(g);
    CHECK(edges == std::set<std::pair<std::string, std::uint32_t>>{{"p:2", 3}});
    CHECK(g.patient_hours_testing(3) == std::vector<std::uint32_t>{2});
}

TEST_CASE("paper-sized vocabularies give 409 lab and 3387 diagnosis nodes") {
    std::vector<PatientRecord> recs{{"p", {event("p", 0.5, 408, 1.0)}, {3386}, true, 10}};
    auto vocab = Vocabulary::synthetic(409, 3387);
    auto g = build_graph(recs, vocab, 6);
    CHECK(g.n_nodes(NodeType::Lab) == 409);
    CHECK(g.n_nodes(NodeType::Diagnosis) == 3387);
}

TEST_CASE("multi_hot") {
    const std::uint32_t idx[] = {1, 3};
    CHECK(multi_hot(idx, 5) == std::vector<double>{0, 1, 0, 1, 0});
    CHECK(multi_hot({}, 4) == std::vector<double>(4, 0.0));
    std::vector<std::uint32_t> all(409);
    std::iota(all.begin(), all.end(), 0u);
    CHECK(multi_hot(all, 409) == std::vector<double>(409, 1.0));
    const std::uint32_t bad[] = {5};
    CHECK_THROWS_AS(multi_hot(bad, 5), std::out_of_range);
}

TEST_CASE("multi_hot then support is the identity on index sets") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t size = 1 + rng.uniform_index(50);
        std::set<std::uint32_t> s;
        const std::size_t picks = rng.uniform_index(size + 1);
        for (std::size_t i = 0; i < picks; ++i) s.insert(static_cast<std::uint32_t>(rng.uniform_index(size)));
        std::vector<std::uint32_t> idx(s.begin(), s.end());
        auto hot = multi_hot(idx, size);
        std::vector<std::uint32_t> support;
        for (std::uint32_t i = 0; i < size; ++i) {
            if (hot[i] == 1.0) support.push_back(i);
        }
        CHECK(support == idx);
    }
}

TEST_CASE("neighbors follows the construction rules") {
    std::vector<PatientRecord> recs{
        {"a", {event("a", 3.5, 0, 1.0)}, {7}, false, 10},
        {"b", {}, {2, 7}, true, 10},
        {"c", {}, {1}, false, 10},
    };
    auto g = build_graph(recs, 2, 8, 6);
    const auto a = *g.ordinal_of("a");
    const auto b = *g.ordinal_of("b");
    const auto c = *g.ordinal_of("c");

    SUBCASE("no observed labs") { CHECK(neighbors(g, g.patient_hour(a, 1), NodeType::Lab).empty()); }
    SUBCASE("shared diagnosis links patients") {
        auto nb = neighbors(g, g.patient_hour(a, 0), NodeType::PatientHour);
        for (std::uint32_t h = 0; h < 6; ++h) {
            CHECK(std::count(nb.begin(), nb.end(), g.patient_hour(b, h)) == 1);
            CHECK(std::count(nb.begin(), nb.end(), g.patient_hour(c, h)) == 0);
        }
    }
    SUBCASE("temporal link toward the endpoint") {
        auto nb = neighbors(g, g.patient_hour(a, 3), NodeType::PatientHour);
        CHECK(std::count(nb.begin(), nb.end(), g.patient_hour(a, 2)) == 1);
        CHECK(std::count(nb.begin(), nb.end(), g.patient_hour(a, 4)) == 0);
        CHECK(g.temporal_next(g.patient_hour(a, 0)) == std::nullopt);
    }
    SUBCASE("reverse directions") {
        auto labs = neighbors(g, {NodeType::Lab, 0}, NodeType::PatientHour);
        CHECK(labs == std::vector<NodeId>{g.patient_hour(a, 3)});
        auto diag = neighbors(g, {NodeType::Diagnosis, 7}, NodeType::PatientHour);
        CHECK(diag.size() == 12);
        CHECK(neighbors(g, {NodeType::Lab, 0}, NodeType::Diagnosis).empty());
    }
    SUBCASE("missing node") { CHECK_THROWS(neighbors(g, {NodeType::Lab, 2}, NodeType::PatientHour)); }
}

TEST_CASE("forward and reverse adjacencies are exact transposes") {
    auto recs = random_records(17, 40, 6, 9);
    auto g = build_graph(recs, 6, 9, 8);
    std::set<std::pair<std::uint32_t, std::uint32_t>> fwd, rev;
    for (std::uint32_t ph = 0; ph < g.n_patient_hours(); ++ph) {
        for (auto l : g.labs_tested({NodeType::PatientHour, ph})) fwd.emplace(ph, l);
        // tested_adj mirrors the observation mask
        const auto& snap = g.snapshot({NodeType::PatientHour, ph});
        for (std::uint32_t l = 0; l < 6; ++l) {
            CHECK((snap.lab_observed[l] != 0) == fwd.count({ph, l}));
        }
    }
    for (std::uint32_t l = 0; l < 6; ++l) {
        for (auto ph : g.patient_hours_testing(l)) rev.emplace(ph, l);
    }
    CHECK(fwd == rev);

    std::set<std::pair<std::uint32_t, std::uint32_t>> dfwd, drev;
    for (std::uint32_t p = 0; p < g.n_patients(); ++p) {
        for (auto d : g.diagnoses_of(p)) dfwd.emplace(p, d);
    }
    for (std::uint32_t d = 0; d < 9; ++d) {
        for (auto p : g.patients_with(d)) drev.emplace(p, d);
    }
    CHECK(dfwd == drev);

    for (std::uint32_t ph = 0; ph < g.n_patient_hours(); ++ph) {
        NodeId n{NodeType::PatientHour, ph};
        auto next = g.temporal_next(n);
        if (g.hour_of(n) == 0) {
            CHECK_FALSE(next.has_value());
        } else {
            REQUIRE(next.has_value());
            CHECK(g.patient_of(*next) == g.patient_of(n));
            CHECK(g.hour_of(*next) + 1 == g.hour_of(n));
        }
    }
}

TEST_CASE("build_graph does not depend on record order") {
    auto recs = random_records(23, 30, 5, 7);
    auto g1 = build_graph(recs, 5, 7, 8);
    Rng rng(1);
    rng.shuffle(std::span(recs));
    auto g2 = build_graph(recs, 5, 7, 8);
    CHECK(tested_edges(g1) == tested_edges(g2));
    for (std::uint32_t p = 0; p < g1.n_patients(); ++p) {
        auto q = *g2.ordinal_of(g1.patient_id(p));
        CHECK(g1.diagnoses_of(p) == g2.diagnoses_of(q));
        for (std::uint32_t h = 0; h < 8; ++h) {
            auto f1 = g1.features(g1.patient_hour(p, h));
            auto f2 = g2.features(g2.patient_hour(q, h));
            CHECK(std::equal(f1.begin(), f1.end(), f2.begin(), f2.end()));
        }
    }
}

TEST_CASE("graph dump lists every node and edge") {
    std::vector<PatientRecord> recs{{"p", {event("p", 1.5, 0, 2.0)}, {0}, false, 4}};
    auto g = build_graph(recs, 1, 1, 2);
    std::ostringstream out;
    g.dump_jsonl(out);
    const std::string s = out.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 2 + 1 + 1 + 1 + 1 + 1);
    CHECK(s.find(R"("edge":"tested")") != std::string::npos);
}

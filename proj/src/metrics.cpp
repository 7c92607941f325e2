#include "hgm_ehr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hgm_ehr/rng.hpp"

namespace hgm_ehr {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("metrics: scores and labels differ in length");
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const auto n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks, doubled to stay in integers
    double rank_sum_x2 = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank_x2 = static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) rank_sum_x2 += midrank_x2;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum_x2 / 2.0 - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

double auprc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const auto n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
    if (n_pos == 0) throw std::invalid_argument("auprc: no positive labels");
    double sum = 0.0;
    std::size_t hits = 0;
    const auto order = descending_order(scores);
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (!labels[order[r]]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    return sum / static_cast<double>(n_pos);
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const auto n_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
    const double n_neg = static_cast<double>(labels.size()) - n_pos;
    std::vector<CurvePoint> out;
    out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    const auto order = descending_order(scores);
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double thr = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == thr; ++i) (labels[order[i]] ? tp : fp) += 1.0;
        out.push_back({thr, n_neg > 0 ? fp / n_neg : 0.0, n_pos > 0 ? tp / n_pos : 0.0});
    }
    return out;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const auto n_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
    std::vector<CurvePoint> out;
    const auto order = descending_order(scores);
    double tp = 0.0, seen = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double thr = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == thr; ++i) {
            seen += 1.0;
            if (labels[order[i]]) tp += 1.0;
        }
        out.push_back({thr, n_pos > 0 ? tp / n_pos : 0.0, tp / seen});
    }
    return out;
}

std::vector<std::vector<std::string>> kfold_split(std::span<const std::string> patient_ids, std::size_t k,
                                                  std::uint64_t seed) {
    const std::size_t n = patient_ids.size();
    if (k < 1) throw std::invalid_argument("kfold_split: k must be positive");
    if (k > n) {
        throw std::invalid_argument("kfold_split: k=" + std::to_string(k) + " exceeds " + std::to_string(n) +
                                    " patients");
    }
    // sort first so the split depends only on the id set and the seed
    std::vector<std::string> ids(patient_ids.begin(), patient_ids.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw std::invalid_argument("kfold_split: duplicate patient ids");
    }
    Rng rng(seed);
    rng.shuffle(std::span(ids));

    std::vector<std::vector<std::string>> folds(k);
    const std::size_t base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        folds[f].assign(ids.begin() + static_cast<std::ptrdiff_t>(pos), ids.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return folds;
}

double mean_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace hgm_ehr

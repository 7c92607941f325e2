#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hgm_ehr {

// Mann-Whitney: (concordant + 0.5 * tied) / (n_pos * n_neg). Needs both classes.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Average precision over the descending score order, ties kept in input
// order. Needs at least one positive.
double auprc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct CurvePoint {
    double threshold;
    double x;
    double y;
};

// One point per distinct threshold, from the highest score down.
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);  // (fpr, tpr)
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);   // (recall, precision)

// Patient-level partition into k test sets whose sizes differ by at most one.
std::vector<std::vector<std::string>> kfold_split(std::span<const std::string> patient_ids, std::size_t k,
                                                  std::uint64_t seed);

double mean_of(std::span<const double> xs);
double sample_stddev(std::span<const double> xs);

}  // namespace hgm_ehr

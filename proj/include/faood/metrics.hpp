#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "faood/scoring.hpp"

namespace faood {

/// Eq. 2 threshold detector: 1 (ID) iff score >= mu.
inline int detect(double score, double mu) { return score >= mu ? 1 : 0; }

/// False-positive rate at the largest threshold mu whose ID true-positive
/// rate (ties counted as ID, matching the detector's >=) is still >= tpr.
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr = 0.95);

/// Mann-Whitney AUROC with midrank tie handling.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

double id_top1_accuracy(std::span<const int> predictions, std::span<const int> labels);

struct DatasetMetrics {
    double fpr95 = 0.0;
    double auroc = 0.0;
};

struct MetricsReport {
    double fpr95 = 0.0;  // unweighted mean over per_dataset (the Average column)
    double auroc = 0.0;
    double id_top1 = 0.0;
    std::map<std::string, DatasetMetrics> per_dataset;  // ordered by dataset name
};

/// Per-OOD-dataset metrics plus their unweighted averages. ID samples carry
/// prediction and truth for the accuracy column; OOD samples must be tagged
/// with truth = -1.
MetricsReport build_report(const std::vector<ScoredSample>& id_samples,
                           const std::map<std::string, std::vector<ScoredSample>>& ood_samples);

/// CSV mirroring the standard table layout: one dataset per row, FPR95 then
/// AUROC, Average last. Fixed 6-decimal formatting keeps reruns byte-identical.
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_report_json(const MetricsReport& report, const std::filesystem::path& path);
std::string report_to_csv(const MetricsReport& report);

}  // namespace faood

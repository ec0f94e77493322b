#include "faood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "faood/errors.hpp"

#include "json.hpp"

namespace faood {

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr) {
    if (id_scores.empty() || ood_scores.empty())
        throw ConfigError("fpr_at_tpr: score vectors must be non-empty");
    if (!(tpr > 0.0) || tpr > 1.0) throw ConfigError("fpr_at_tpr: tpr must be in (0, 1]");

    std::vector<double> sorted(id_scores.begin(), id_scores.end());
    std::sort(sorted.begin(), sorted.end());
    const int n = static_cast<int>(sorted.size());

    // Smallest ID count m whose rate m/n still reaches tpr; the m-th largest
    // ID score is then the largest admissible threshold (duplicates below it
    // only raise the realized TPR).
    int m = static_cast<int>(std::ceil(tpr * static_cast<double>(n)));
    m = std::clamp(m, 1, n);
    while (m > 1 && static_cast<double>(m - 1) / n >= tpr) --m;
    while (m < n && static_cast<double>(m) / n < tpr) ++m;
    const double mu = sorted[static_cast<size_t>(n - m)];

    size_t false_positives = 0;
    for (double s : ood_scores)
        if (detect(s, mu) == 1) ++false_positives;
    return static_cast<double>(false_positives) / static_cast<double>(ood_scores.size());
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
    if (id_scores.empty() || ood_scores.empty())
        throw ConfigError("auroc: score vectors must be non-empty");

    // Midrank-based Mann-Whitney statistic.
    struct Tagged {
        double score;
        bool is_id;
    };
    std::vector<Tagged> all;
    all.reserve(id_scores.size() + ood_scores.size());
    for (double s : id_scores) all.push_back({s, true});
    for (double s : ood_scores) all.push_back({s, false});
    std::sort(all.begin(), all.end(),
              [](const Tagged& a, const Tagged& b) { return a.score < b.score; });

    double rank_sum_id = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (size_t k = i; k < j; ++k)
            if (all[k].is_id) rank_sum_id += midrank;
        i = j;
    }
    const double n_id = static_cast<double>(id_scores.size());
    const double n_ood = static_cast<double>(ood_scores.size());
    const double u = rank_sum_id - n_id * (n_id + 1.0) / 2.0;
    return u / (n_id * n_ood);
}

double id_top1_accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw ConfigError("id_top1_accuracy: predictions and labels differ in length");
    if (predictions.empty()) throw ConfigError("id_top1_accuracy: empty input");
    size_t hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

MetricsReport build_report(const std::vector<ScoredSample>& id_samples,
                           const std::map<std::string, std::vector<ScoredSample>>& ood_samples) {
    if (id_samples.empty()) throw ConfigError("build_report: no ID scores");
    if (ood_samples.empty()) throw ConfigError("build_report: at least one OOD dataset required");

    std::vector<double> id_scores;
    std::vector<int> predictions, labels;
    id_scores.reserve(id_samples.size());
    for (const auto& s : id_samples) {
        if (s.truth < 0) throw ConfigError("build_report: ID sample tagged as OOD");
        id_scores.push_back(s.score);
        predictions.push_back(s.predicted_class);
        labels.push_back(s.truth);
    }

    MetricsReport report;
    report.id_top1 = id_top1_accuracy(predictions, labels);

    double fpr_sum = 0.0, auroc_sum = 0.0;
    for (const auto& [name, samples] : ood_samples) {
        if (samples.empty()) throw ConfigError("build_report: OOD dataset '" + name + "' is empty");
        std::vector<double> scores;
        scores.reserve(samples.size());
        for (const auto& s : samples) {
            if (s.truth >= 0)
                throw ConfigError("build_report: OOD dataset '" + name + "' contains an ID tag");
            scores.push_back(s.score);
        }
        DatasetMetrics m;
        m.fpr95 = fpr_at_tpr(id_scores, scores, 0.95);
        m.auroc = auroc(id_scores, scores);
        report.per_dataset[name] = m;
        fpr_sum += m.fpr95;
        auroc_sum += m.auroc;
    }
    const double count = static_cast<double>(report.per_dataset.size());
    report.fpr95 = fpr_sum / count;
    report.auroc = auroc_sum / count;
    return report;
}

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string report_to_csv(const MetricsReport& report) {
    std::string csv = "dataset,fpr95,auroc\n";
    for (const auto& [name, m] : report.per_dataset)
        csv += name + "," + fixed6(m.fpr95) + "," + fixed6(m.auroc) + "\n";
    csv += "Average," + fixed6(report.fpr95) + "," + fixed6(report.auroc) + "\n";
    return csv;
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write report: " + path.string());
    out << report_to_csv(report);
}

void write_report_json(const MetricsReport& report, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["id_top1"] = report.id_top1;
    nlohmann::ordered_json datasets;
    for (const auto& [name, m] : report.per_dataset)
        datasets[name] = {{"fpr95", m.fpr95}, {"auroc", m.auroc}};
    j["per_dataset"] = datasets;
    j["average"] = {{"fpr95", report.fpr95}, {"auroc", report.auroc}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace faood

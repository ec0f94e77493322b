#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace faood {

/// Overlaid ID/OOD score histograms as a static SVG.
void write_score_histogram_svg(std::span<const double> id_scores,
                               std::span<const double> ood_scores, const std::string& title,
                               const std::filesystem::path& path, int bins = 40);

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Simple multi-series line plot (used for the K-sensitivity curves).
void write_line_plot_svg(const std::vector<PlotSeries>& series, const std::string& title,
                         const std::string& x_label, const std::filesystem::path& path);

}  // namespace faood

#include "faood/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "faood/errors.hpp"

namespace faood {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMargin = 56;

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string svg_header(const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + std::to_string(kWidth / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         title + "</text>\n";
    return s;
}

std::string axes(double x_min, double x_max, double y_min, double y_max,
                 const std::string& x_label) {
    std::string s;
    const int x0 = kMargin, x1 = kWidth - kMargin / 2;
    const int y0 = kHeight - kMargin, y1 = kMargin;
    s += "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" +
         std::to_string(x1) + "\" y2=\"" + std::to_string(y0) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" +
         std::to_string(x0) + "\" y2=\"" + std::to_string(y1) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + std::to_string(x0) + "\" y=\"" + std::to_string(y0 + 20) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + num(x_min) + "</text>\n";
    s += "<text x=\"" + std::to_string(x1 - 30) + "\" y=\"" + std::to_string(y0 + 20) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + num(x_max) + "</text>\n";
    s += "<text x=\"6\" y=\"" + std::to_string(y0) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + num(y_min) + "</text>\n";
    s += "<text x=\"6\" y=\"" + std::to_string(y1 + 4) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + num(y_max) + "</text>\n";
    s += "<text x=\"" + std::to_string((x0 + x1) / 2) + "\" y=\"" +
         std::to_string(kHeight - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + x_label +
         "</text>\n";
    return s;
}

double map_x(double v, double lo, double hi) {
    const double span = hi > lo ? hi - lo : 1.0;
    return kMargin + (v - lo) / span * (kWidth - 1.5 * kMargin);
}

double map_y(double v, double lo, double hi) {
    const double span = hi > lo ? hi - lo : 1.0;
    return (kHeight - kMargin) - (v - lo) / span * (kHeight - 2.0 * kMargin);
}

}  // namespace

void write_score_histogram_svg(std::span<const double> id_scores,
                               std::span<const double> ood_scores, const std::string& title,
                               const std::filesystem::path& path, int bins) {
    if (id_scores.empty() || ood_scores.empty())
        throw ConfigError("histogram needs non-empty ID and OOD scores");
    if (bins < 2) throw ConfigError("histogram needs at least 2 bins");

    double lo = id_scores[0], hi = id_scores[0];
    for (double v : id_scores) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : ood_scores) lo = std::min(lo, v), hi = std::max(hi, v);
    if (hi <= lo) hi = lo + 1.0;

    auto fill = [&](std::span<const double> scores) {
        std::vector<double> counts(static_cast<size_t>(bins), 0.0);
        for (double v : scores) {
            int b = static_cast<int>((v - lo) / (hi - lo) * bins);
            b = std::clamp(b, 0, bins - 1);
            counts[static_cast<size_t>(b)] += 1.0 / static_cast<double>(scores.size());
        }
        return counts;
    };
    const auto id_counts = fill(id_scores);
    const auto ood_counts = fill(ood_scores);
    double peak = 0.0;
    for (size_t b = 0; b < id_counts.size(); ++b)
        peak = std::max({peak, id_counts[b], ood_counts[b]});
    if (peak <= 0.0) peak = 1.0;

    std::string svg = svg_header(title) + axes(lo, hi, 0.0, peak, "score");
    auto bars = [&](const std::vector<double>& counts, const char* color, double shift) {
        std::string s;
        const double bin_w = (kWidth - 1.5 * kMargin) / static_cast<double>(bins);
        for (int b = 0; b < bins; ++b) {
            const double h = counts[static_cast<size_t>(b)] / peak * (kHeight - 2.0 * kMargin);
            if (h <= 0.0) continue;
            s += "<rect x=\"" + num(kMargin + b * bin_w + shift) + "\" y=\"" +
                 num(kHeight - kMargin - h) + "\" width=\"" + num(bin_w * 0.45) +
                 "\" height=\"" + num(h) + "\" fill=\"" + color + "\" opacity=\"0.75\"/>\n";
        }
        return s;
    };
    svg += bars(id_counts, "#1f77b4", 0.0);
    svg += bars(ood_counts, "#ff7f0e", (kWidth - 1.5 * kMargin) / bins * 0.5);
    svg += "<text x=\"" + std::to_string(kWidth - 170) +
           "\" y=\"40\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">ID</text>\n";
    svg += "<text x=\"" + std::to_string(kWidth - 140) +
           "\" y=\"40\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#ff7f0e\">OOD</text>\n";
    svg += "</svg>\n";

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write plot: " + path.string());
    out << svg;
}

void write_line_plot_svg(const std::vector<PlotSeries>& series, const std::string& title,
                         const std::string& x_label, const std::filesystem::path& path) {
    if (series.empty()) throw ConfigError("line plot needs at least one series");
    double x_lo = series[0].x.at(0), x_hi = x_lo, y_lo = series[0].y.at(0), y_hi = y_lo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size() || s.x.empty())
            throw ConfigError("line plot series '" + s.label + "' is malformed");
        for (double v : s.x) x_lo = std::min(x_lo, v), x_hi = std::max(x_hi, v);
        for (double v : s.y) y_lo = std::min(y_lo, v), y_hi = std::max(y_hi, v);
    }
    if (y_hi <= y_lo) y_hi = y_lo + 1.0;

    const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
    std::string svg = svg_header(title) + axes(x_lo, x_hi, y_lo, y_hi, x_label);
    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = palette[i % 4];
        std::string points;
        for (size_t p = 0; p < series[i].x.size(); ++p) {
            points += num(map_x(series[i].x[p], x_lo, x_hi)) + "," +
                      num(map_y(series[i].y[p], y_lo, y_hi)) + " ";
        }
        svg += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        for (size_t p = 0; p < series[i].x.size(); ++p)
            svg += "<circle cx=\"" + num(map_x(series[i].x[p], x_lo, x_hi)) + "\" cy=\"" +
                   num(map_y(series[i].y[p], y_lo, y_hi)) + "\" r=\"3\" fill=\"" + color +
                   "\"/>\n";
        svg += "<text x=\"" + std::to_string(kWidth - 150) + "\" y=\"" +
               std::to_string(40 + 16 * static_cast<int>(i)) +
               "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color + "\">" +
               series[i].label + "</text>\n";
    }
    svg += "</svg>\n";

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write plot: " + path.string());
    out << svg;
}

}  // namespace faood

#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mll/matrix.hpp"
#include "mll/metrics.hpp"

namespace mll {

// Scatter plot of normalized 2-D embeddings on the unit circle with class
// centres, the angular gap between consecutive centres and each class's
// spread annotated. Plain SVG text, no rendering dependency.
inline std::string toy_figure_svg(const Matrix& embeddings, const std::vector<int>& labels,
                                  const GeometryReport& report, const std::string& title) {
    static const char* kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                     "#911eb4", "#46f0f0", "#f032e6", "#9a6324",
                                     "#800000", "#808000", "#000075", "#469990"};
    constexpr int kPaletteSize = 12;
    const double size = 640.0, half = size / 2.0, radius = 210.0;

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };
    auto px = [&](double x) { return fmt(half + radius * x); };
    auto py = [&](double y) { return fmt(half - radius * y); }; // svg y grows downward

    const Matrix unit = l2_normalize_rows_2d(embeddings);

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
           "viewBox=\"0 0 640 640\">\n";
    svg += "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
    svg += "<title>" + title + "</title>\n";
    svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" + title + "</text>\n";
    svg += "<circle cx=\"" + fmt(half) + "\" cy=\"" + fmt(half) + "\" r=\"" + fmt(radius) +
           "\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";

    for (std::size_t i = 0; i < unit.rows(); ++i) {
        const char* color = kPalette[labels[i] % kPaletteSize];
        svg += "<circle cx=\"" + px(unit(i, 0)) + "\" cy=\"" + py(unit(i, 1)) +
               "\" r=\"2\" fill=\"" + color + "\" fill-opacity=\"0.5\"/>\n";
    }

    const std::size_t c = report.class_order.size();
    for (std::size_t i = 0; i < c; ++i) {
        const double cx = report.class_centers(i, 0), cy = report.class_centers(i, 1);
        const char* color = kPalette[report.class_order[i] % kPaletteSize];
        svg += "<line x1=\"" + fmt(half) + "\" y1=\"" + fmt(half) + "\" x2=\"" + px(cx) +
               "\" y2=\"" + py(cy) + "\" stroke=\"" + color +
               "\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"/>\n";

        // per-class spread just outside the circle
        char std_label[32];
        std::snprintf(std_label, sizeof(std_label), "%.4f", report.per_class_std[i]);
        svg += "<text x=\"" + fmt(half + 1.13 * radius * cx) + "\" y=\"" +
               fmt(half - 1.13 * radius * cy) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" +
               color + "\">" + std_label + "</text>\n";

        // angular gap label between this centre and the next one
        const std::size_t j = (i + 1) % c;
        double a0 = std::atan2(cy, cx);
        double a1 = std::atan2(report.class_centers(j, 1), report.class_centers(j, 0));
        if (a1 <= a0) a1 += 2.0 * 3.14159265358979323846;
        const double mid = 0.5 * (a0 + a1);
        char gap_label[32];
        std::snprintf(gap_label, sizeof(gap_label), "%.1f&#176;", report.consecutive_angles_deg[i]);
        svg += "<text x=\"" + fmt(half + 1.28 * radius * std::cos(mid)) + "\" y=\"" +
               fmt(half - 1.28 * radius * std::sin(mid)) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
               "fill=\"#444444\">" + gap_label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace mll

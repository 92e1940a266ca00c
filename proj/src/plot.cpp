#include "siamdff/plot.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace siamdff {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 480;
constexpr double kMarginLeft = 60;
constexpr double kMarginRight = 20;
constexpr double kMarginTop = 20;
constexpr double kMarginBottom = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

std::string render_curves_svg(const std::vector<MetricCurve>& curves,
                              const std::vector<std::string>& labels,
                              const std::string& x_label, const std::string& y_label) {
    if (curves.empty()) {
        throw std::invalid_argument("render_curves_svg: no curves");
    }
    double x_min = curves[0].thresholds.front(), x_max = curves[0].thresholds.back();
    for (const auto& c : curves) {
        if (c.thresholds.empty() || c.thresholds.size() != c.values.size()) {
            throw std::invalid_argument("render_curves_svg: malformed curve");
        }
        x_min = std::min(x_min, c.thresholds.front());
        x_max = std::max(x_max, c.thresholds.back());
    }
    if (x_max <= x_min) x_max = x_min + 1;

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    const auto sx = [&](double x) { return kMarginLeft + (x - x_min) / (x_max - x_min) * plot_w; };
    const auto sy = [&](double y) { return kMarginTop + (1.0 - y) * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 480\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
    // Axes.
    svg << "<line x1=\"" << fmt(kMarginLeft) << "\" y1=\"" << fmt(sy(0)) << "\" x2=\""
        << fmt(kWidth - kMarginRight) << "\" y2=\"" << fmt(sy(0))
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << fmt(kMarginLeft) << "\" y1=\"" << fmt(sy(0)) << "\" x2=\""
        << fmt(kMarginLeft) << "\" y2=\"" << fmt(sy(1))
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    // Tick labels at both ends of each axis.
    svg << "<text x=\"" << fmt(kMarginLeft) << "\" y=\"" << fmt(kHeight - kMarginBottom + 18)
        << "\" font-size=\"12\" text-anchor=\"middle\">" << fmt(x_min) << "</text>\n";
    svg << "<text x=\"" << fmt(kWidth - kMarginRight) << "\" y=\""
        << fmt(kHeight - kMarginBottom + 18) << "\" font-size=\"12\" text-anchor=\"middle\">"
        << fmt(x_max) << "</text>\n";
    svg << "<text x=\"" << fmt(kMarginLeft - 8) << "\" y=\"" << fmt(sy(0) + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">0</text>\n";
    svg << "<text x=\"" << fmt(kMarginLeft - 8) << "\" y=\"" << fmt(sy(1) + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">1</text>\n";
    // Axis labels.
    svg << "<text x=\"" << fmt(kMarginLeft + plot_w / 2) << "\" y=\"" << fmt(kHeight - 12)
        << "\" font-size=\"14\" text-anchor=\"middle\">" << x_label << "</text>\n";
    svg << "<text x=\"16\" y=\"" << fmt(kMarginTop + plot_h / 2)
        << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << fmt(kMarginTop + plot_h / 2) << ")\">" << y_label << "</text>\n";

    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& c = curves[ci];
        const char* color = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
            if (i > 0) svg << " ";
            svg << fmt(sx(c.thresholds[i])) << "," << fmt(sy(std::clamp(c.values[i], 0.0, 1.0)));
        }
        svg << "\"/>\n";
        if (ci < labels.size() && !labels[ci].empty()) {
            const double ly = kMarginTop + 16 + 18 * static_cast<double>(ci);
            svg << "<line x1=\"" << fmt(kWidth - kMarginRight - 150) << "\" y1=\"" << fmt(ly - 4)
                << "\" x2=\"" << fmt(kWidth - kMarginRight - 126) << "\" y2=\"" << fmt(ly - 4)
                << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
            svg << "<text x=\"" << fmt(kWidth - kMarginRight - 120) << "\" y=\"" << fmt(ly)
                << "\" font-size=\"12\">" << labels[ci] << "</text>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace siamdff

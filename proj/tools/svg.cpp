#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace stabinv::plot {

namespace {

constexpr double kPanelWidth = 320.0;
constexpr double kPanelHeight = 240.0;
constexpr double kMarginLeft = 50.0;
constexpr double kMarginBottom = 40.0;
constexpr double kMarginTop = 50.0;

std::string num(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string tick(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

void text(std::ostringstream& svg, double x, double y, const std::string& s, const char* anchor = "middle",
          int size = 12)
{
    svg << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\">" << escape(s) << "</text>\n";
}

void line(std::ostringstream& svg, double x1, double y1, double x2, double y2)
{
    svg << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
}

}  // namespace

std::vector<int> bin_counts(const std::vector<double>& values, double lo, double hi, int bins)
{
    std::vector<int> counts(static_cast<std::size_t>(std::max(bins, 1)), 0);
    const double width = (hi - lo) / static_cast<double>(counts.size());
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        long bin = width > 0.0 ? static_cast<long>(std::floor((v - lo) / width)) : 0;
        bin = std::clamp<long>(bin, 0, static_cast<long>(counts.size()) - 1);
        counts[static_cast<std::size_t>(bin)] += 1;
    }
    return counts;
}

std::string histogram_svg(const std::string& title, const std::vector<HistogramPanel>& panels)
{
    const double width = kMarginLeft + static_cast<double>(panels.size()) * (kPanelWidth + kMarginLeft);
    const double height = kMarginTop + kPanelHeight + kMarginBottom;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(svg, width / 2, 20, title, "middle", 14);
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const auto& panel = panels[p];
        const double x0 = kMarginLeft + static_cast<double>(p) * (kPanelWidth + kMarginLeft);
        const double y0 = kMarginTop + kPanelHeight;
        const int peak = std::max(1, panel.counts.empty() ? 1 : *std::max_element(panel.counts.begin(), panel.counts.end()));
        const double bar_w = panel.counts.empty() ? 0.0 : kPanelWidth / static_cast<double>(panel.counts.size());
        for (std::size_t i = 0; i < panel.counts.size(); ++i) {
            const double h = kPanelHeight * panel.counts[i] / peak;
            svg << "<rect x=\"" << num(x0 + static_cast<double>(i) * bar_w) << "\" y=\"" << num(y0 - h)
                << "\" width=\"" << num(bar_w) << "\" height=\"" << num(h)
                << "\" fill=\"steelblue\" stroke=\"white\" stroke-width=\"0.5\"/>\n";
        }
        line(svg, x0, y0, x0 + kPanelWidth, y0);
        line(svg, x0, y0, x0, kMarginTop);
        text(svg, x0, y0 + 15, tick(panel.lo));
        text(svg, x0 + kPanelWidth, y0 + 15, tick(panel.hi));
        text(svg, x0 - 5, kMarginTop + 10, std::to_string(peak), "end", 10);
        text(svg, x0 + kPanelWidth / 2, y0 + 32, panel.xlabel);
        text(svg, x0 + kPanelWidth / 2, kMarginTop - 8, panel.title);
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string bar_chart_svg(const std::string& title, const std::string& ylabel, const std::vector<std::string>& labels,
                          const std::vector<double>& values)
{
    const double width = kMarginLeft * 2 + kPanelWidth;
    const double height = kMarginTop + kPanelHeight + kMarginBottom;
    const double peak = values.empty() ? 1.0 : std::max(1e-300, *std::max_element(values.begin(), values.end()));
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(svg, width / 2, 20, title, "middle", 14);
    const double x0 = kMarginLeft;
    const double y0 = kMarginTop + kPanelHeight;
    const double slot = values.empty() ? 0.0 : kPanelWidth / static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double h = kPanelHeight * std::max(0.0, values[i]) / peak;
        const double x = x0 + static_cast<double>(i) * slot + 0.15 * slot;
        svg << "<rect x=\"" << num(x) << "\" y=\"" << num(y0 - h) << "\" width=\"" << num(0.7 * slot)
            << "\" height=\"" << num(h) << "\" fill=\"steelblue\"/>\n";
        text(svg, x + 0.35 * slot, y0 + 15, i < labels.size() ? labels[i] : "");
        text(svg, x + 0.35 * slot, y0 - h - 4, tick(values[i]), "middle", 10);
    }
    line(svg, x0, y0, x0 + kPanelWidth, y0);
    line(svg, x0, y0, x0, kMarginTop);
    text(svg, x0, kMarginTop - 8, ylabel, "start", 12);
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace stabinv::plot

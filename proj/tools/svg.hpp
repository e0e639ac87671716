#pragma once

#include <string>
#include <vector>

namespace stabinv::plot {

struct HistogramPanel {
    std::string title;
    std::string xlabel;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<int> counts;
};

// Side-by-side histogram panels sharing one figure title.
std::string histogram_svg(const std::string& title, const std::vector<HistogramPanel>& panels);

// Vertical bars, one per label.
std::string bar_chart_svg(const std::string& title, const std::string& ylabel, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

// Counts of `values` in `bins` equal bins on [lo, hi]; values outside are
// clamped into the end bins.
std::vector<int> bin_counts(const std::vector<double>& values, double lo, double hi, int bins);

}  // namespace stabinv::plot

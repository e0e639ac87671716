#pragma once

#include <vector>

namespace stabinv {

// One-dimensional rule: nodes and positive weights.
struct Rule1D {
    std::vector<double> nodes;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

/// Gauss–Legendre rule of the given order on [-1, 1], computed by Newton
/// iteration on the Legendre recurrence. Exact for polynomials of degree
/// 2*order - 1.
Rule1D gauss_legendre(int order);

/// Composite Gauss–Legendre rule on [lo, hi]: `cells` equal subintervals with
/// an `order`-point rule on each.
Rule1D composite_gauss_legendre(double lo, double hi, int cells, int order);

/// Composite trapezoid rule on [lo, hi] with n >= 2 equally spaced nodes.
Rule1D trapezoid(double lo, double hi, int n);

}  // namespace stabinv

#include "stabinv/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "stabinv/errors.hpp"

namespace stabinv {

Rule1D gauss_legendre(int order)
{
    if (order < 1) throw InvalidArgument("gauss_legendre: order must be >= 1");
    Rule1D rule;
    rule.nodes.assign(order, 0.0);
    rule.weights.assign(order, 0.0);
    const int half = (order + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Tricomi initial guess for the i-th root.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // Re-evaluate the derivative at the converged root.
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= order; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        dp = order * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[order - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[order - 1 - i] = w;
    }
    if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
    return rule;
}

Rule1D composite_gauss_legendre(double lo, double hi, int cells, int order)
{
    if (cells < 1) throw InvalidArgument("composite_gauss_legendre: cells must be >= 1");
    if (!(hi > lo)) throw InvalidArgument("composite_gauss_legendre: empty interval");
    const Rule1D ref = gauss_legendre(order);
    const double h = (hi - lo) / cells;
    Rule1D rule;
    rule.nodes.reserve(static_cast<std::size_t>(cells) * order);
    rule.weights.reserve(rule.nodes.capacity());
    for (int c = 0; c < cells; ++c) {
        const double mid = lo + (c + 0.5) * h;
        for (int i = 0; i < order; ++i) {
            rule.nodes.push_back(mid + 0.5 * h * ref.nodes[i]);
            rule.weights.push_back(0.5 * h * ref.weights[i]);
        }
    }
    return rule;
}

Rule1D trapezoid(double lo, double hi, int n)
{
    if (n < 2) throw InvalidArgument("trapezoid: need at least 2 nodes");
    const double h = (hi - lo) / (n - 1);
    Rule1D rule;
    rule.nodes.resize(n);
    rule.weights.assign(n, h);
    for (int i = 0; i < n; ++i) rule.nodes[i] = lo + i * h;
    rule.nodes[n - 1] = hi;
    rule.weights.front() = 0.5 * h;
    rule.weights.back() = 0.5 * h;
    return rule;
}

}  // namespace stabinv

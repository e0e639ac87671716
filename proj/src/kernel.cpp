#include "stabinv/kernel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "stabinv/errors.hpp"

namespace stabinv {

namespace {

constexpr double kInv2Pi = 0.5 / std::numbers::pi;

// exp(-1/s) for s > 0, else 0.
double bump(double s)
{
    return s > 0.0 ? std::exp(-1.0 / s) : 0.0;
}

double bump_derivative(double s)
{
    return s > 0.0 ? std::exp(-1.0 / s) / (s * s) : 0.0;
}

void require_valid_d0(double d0)
{
    if (!(d0 < 0.0)) throw InvalidArgument("cutoff depth d0 must be negative");
}

[[noreturn]] void singular(const FaultParams& m, const Point2& x, const Point2& y)
{
    std::ostringstream msg;
    msg << "kernel singular: observation point (" << x[0] << ", " << x[1] << ", 0) lies on the fault "
        << "at y = (" << y[0] << ", " << y[1] << ") for m = (" << m.a << ", " << m.b << ", " << m.d << ")";
    throw SingularityError(msg.str());
}

struct Geometry {
    double D1, D2, D3;  // x - Y
    double r2;
    double s;  // (x - Y) . (-a, -b, 1)
};

Geometry relative(const FaultParams& m, const Point2& x, const Point2& y, double depth)
{
    Geometry g;
    g.D1 = x[0] - y[0];
    g.D2 = x[1] - y[1];
    g.D3 = -depth;
    g.r2 = g.D1 * g.D1 + g.D2 * g.D2 + g.D3 * g.D3;
    g.s = -m.a * g.D1 - m.b * g.D2 + g.D3;
    return g;
}

}  // namespace

void KernelConfig::validate() const
{
    require_valid_d0(d0);
    if (kind != KernelKind::LaplaceHalfspace) throw InvalidArgument("unsupported kernel kind");
}

double green_phi(const Point3& x, const Point3& y)
{
    const double dx = x[0] - y[0];
    const double dy = x[1] - y[1];
    const double dz = x[2] - y[2];
    const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (r == 0.0) throw SingularityError("green_phi: x and y coincide");
    return 0.25 / (std::numbers::pi * r);
}

double cutoff_chi(double t, double d0)
{
    require_valid_d0(d0);
    if (t <= 2.0 * d0) return 1.0;
    if (t >= d0) return 0.0;
    // s runs 0 -> 1 as t runs 2*d0 -> d0.
    const double s = (t - 2.0 * d0) / (-d0);
    const double up = bump(1.0 - s);
    return up / (up + bump(s));
}

double cutoff_chi_derivative(double t, double d0)
{
    require_valid_d0(d0);
    if (t <= 2.0 * d0 || t >= d0) return 0.0;
    const double s = (t - 2.0 * d0) / (-d0);
    const double f = bump(s);
    const double g = bump(1.0 - s);
    const double denom = (f + g) * (f + g);
    // d/ds [g/(f+g)] with g = bump(1-s).
    const double dchi_ds = (-bump_derivative(1.0 - s) * f - g * bump_derivative(s)) / denom;
    return dchi_ds / (-d0);
}

double max_fault_depth(const FaultParams& m, double half_width)
{
    return std::abs(m.a) * half_width + std::abs(m.b) * half_width + m.d;
}

double kernel_H(const FaultParams& m, const Point2& x, const Point2& y, const KernelConfig& cfg)
{
    const double depth = m.a * y[0] + m.b * y[1] + m.d;
    double chi = 1.0;
    if (cfg.cutoff_enabled) {
        chi = cutoff_chi(depth, cfg.d0);
        if (chi == 0.0) return 0.0;
    }
    const Geometry g = relative(m, x, y, depth);
    if (g.r2 == 0.0) singular(m, x, y);
    const double r = std::sqrt(g.r2);
    return kInv2Pi * chi * g.s / (g.r2 * r);
}

std::array<double, 2> kernel_H_grad_x(const FaultParams& m, const Point2& x, const Point2& y,
                                      const KernelConfig& cfg)
{
    const double depth = m.a * y[0] + m.b * y[1] + m.d;
    double chi = 1.0;
    if (cfg.cutoff_enabled) {
        chi = cutoff_chi(depth, cfg.d0);
        if (chi == 0.0) return {0.0, 0.0};
    }
    const Geometry g = relative(m, x, y, depth);
    if (g.r2 == 0.0) singular(m, x, y);
    const double r = std::sqrt(g.r2);
    const double inv_r3 = 1.0 / (g.r2 * r);
    const double inv_r5 = inv_r3 / g.r2;
    const double c = kInv2Pi * chi;
    return {c * (-m.a * inv_r3 - 3.0 * g.s * g.D1 * inv_r5),
            c * (-m.b * inv_r3 - 3.0 * g.s * g.D2 * inv_r5)};
}

std::array<double, 3> kernel_H_dm(const FaultParams& m, const Point2& x, const Point2& y,
                                  const KernelConfig& cfg)
{
    const double depth = m.a * y[0] + m.b * y[1] + m.d;
    double chi = 1.0;
    double dchi = 0.0;
    if (cfg.cutoff_enabled) {
        chi = cutoff_chi(depth, cfg.d0);
        if (chi == 0.0) return {0.0, 0.0, 0.0};
        dchi = cutoff_chi_derivative(depth, cfg.d0);
    }
    const Geometry g = relative(m, x, y, depth);
    if (g.r2 == 0.0) singular(m, x, y);
    const double r = std::sqrt(g.r2);
    const double inv_r3 = 1.0 / (g.r2 * r);
    const double inv_r5 = inv_r3 / g.r2;

    // Y3 = a y1 + b y2 + d, so dY3/dp = (y1, y2, 1) and D3 = -Y3.
    const double dY3[3] = {y[0], y[1], 1.0};
    // ds/dp: derivative of the normal factor plus the D3 chain term.
    const double ds[3] = {-g.D1 - dY3[0], -g.D2 - dY3[1], -dY3[2]};

    std::array<double, 3> out{};
    for (int p = 0; p < 3; ++p) {
        // d(r^-3)/dp = -3 r^-5 D3 dD3/dp = 3 r^-5 D3 dY3/dp.
        const double dinv_r3 = 3.0 * inv_r5 * g.D3 * dY3[p];
        out[p] = kInv2Pi * (chi * (ds[p] * inv_r3 + g.s * dinv_r3) + dchi * dY3[p] * g.s * inv_r3);
    }
    return out;
}

}  // namespace stabinv

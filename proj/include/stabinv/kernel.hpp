#pragma once

#include <array>

#include "stabinv/geometry.hpp"

namespace stabinv {

enum class KernelKind {
    LaplaceHalfspace,
};

struct KernelConfig {
    bool cutoff_enabled = true;
    double d0 = -5.0;  // km, must be negative
    KernelKind kind = KernelKind::LaplaceHalfspace;

    void validate() const;
};

/// Free-space Green function of the Laplacian, 1 / (4 pi |x - y|).
double green_phi(const Point3& x, const Point3& y);

/// Smooth depth cutoff: 1 for t <= 2*d0, 0 for t >= d0, C-infinity and
/// strictly decreasing in between (exp(-1/s) partition-of-unity blend).
double cutoff_chi(double t, double d0);
double cutoff_chi_derivative(double t, double d0);

/// Half-space kernel integrand at the measurement point (x, 0) and source
/// parameter y in R:
///   [grad_y Phi((x,0), Y) + grad_y Phi((x,0)^-, Y)] . (-a, -b, 1) * chi(Y3),
/// with Y = fault_point(m, y). The un-normalized normal (-a, -b, 1) is n times
/// the surface element. On x3 = 0 the two image terms coincide.
double kernel_H(const FaultParams& m, const Point2& x, const Point2& y, const KernelConfig& cfg);

/// Gradient of kernel_H in (x1, x2).
std::array<double, 2> kernel_H_grad_x(const FaultParams& m, const Point2& x, const Point2& y,
                                      const KernelConfig& cfg);

/// Partial derivatives of kernel_H in (a, b, d).
std::array<double, 3> kernel_H_dm(const FaultParams& m, const Point2& x, const Point2& y,
                                  const KernelConfig& cfg);

/// Largest depth a*y1 + b*y2 + d over the square [-L, L]^2.
double max_fault_depth(const FaultParams& m, double half_width);

}  // namespace stabinv

#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabinv/quadrature.hpp"

namespace stabinv {

using Point2 = std::array<double, 2>;
using Point3 = std::array<double, 3>;

// Geometry parameter m = (a, b, d) of the planar fault x3 = a x1 + b x2 + d.
// Slopes are dimensionless, d is in kilometers.
struct FaultParams {
    double a = 0.0;
    double b = 0.0;
    double d = -20.0;

    [[nodiscard]] Eigen::Vector3d vec() const { return {a, b, d}; }
    static FaultParams from(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }

    friend bool operator==(const FaultParams&, const FaultParams&) = default;
};

double distance(const FaultParams& m1, const FaultParams& m2);

// Closed interval, always stored low-to-high.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] double width() const { return hi - lo; }
    [[nodiscard]] bool contains(double t) const { return lo <= t && t <= hi; }
};

// Admissible parameter box B.
struct ParamBox {
    Interval a{-2.0, 2.0};
    Interval b{-2.0, 2.0};
    Interval d{-60.0, -10.0};

    // Throws ConfigError naming the first inverted or degenerate interval.
    void validate() const;
    [[nodiscard]] bool contains(const FaultParams& m) const;
    // Affine map B -> [0,1]^3 and back.
    [[nodiscard]] Eigen::Vector3d to_unit(const FaultParams& m) const;
    [[nodiscard]] FaultParams from_unit(const Eigen::Vector3d& t) const;
};

/// Point of the fault surface above (y1, y2): (y1, y2, a*y1 + b*y2 + d).
Point3 fault_point(const FaultParams& m, double y1, double y2);

// Source region R = [-half_width, half_width]^2 carrying the slip.
struct SourceRegion {
    double half_width = 150.0;
    int cells_per_axis = 8;
    int order = 4;

    void validate() const;
};

// Tensor-product quadrature over R. Node (i, j) sits at (x[i], x[j]) with
// weight w[i] * w[j].
struct SourceQuadrature {
    Rule1D axis;

    [[nodiscard]] std::size_t size() const { return axis.size() * axis.size(); }
};

SourceQuadrature source_quadrature(const SourceRegion& region);

// Observation points P_j on V = [-half_width, half_width]^2 in the plane
// x3 = 0, with area weights C'(j).
struct ObservationGrid {
    std::vector<Point2> points;
    std::vector<double> weights;
    double half_width = 200.0;
    int n_per_axis = 0;
    std::string rule;  // "trapezoid" or "gauss"

    [[nodiscard]] std::size_t size() const { return points.size(); }
    [[nodiscard]] double weight_sum() const;
    [[nodiscard]] std::string describe() const;
};

/// Uniform n x n tensor grid on V with trapezoid weights (order-one rule).
ObservationGrid observation_grid(int n_per_axis, double half_width = 200.0);

/// Composite Gauss–Legendre grid on V; used as the dense "continuous" oracle.
ObservationGrid gauss_observation_grid(int cells_per_axis, int order, double half_width = 200.0);

// Tensor sine basis of H^1_0(R), R = [-L, L]^2:
//   phi_kl(y) = sin(k pi (y1 + L) / 2L) sin(l pi (y2 + L) / 2L),  1 <= k, l <= K,
// normalized to unit H^1_0 norm ||grad phi||_{L2(R)}.
class SineBasis {
public:
    SineBasis() = default;
    SineBasis(int modes_per_axis, double half_width);

    [[nodiscard]] int modes_per_axis() const { return K_; }
    [[nodiscard]] double half_width() const { return L_; }
    [[nodiscard]] int size() const { return K_ * K_; }

    // Mode (k, l) for flat index idx = (k-1)*K + (l-1).
    [[nodiscard]] std::array<int, 2> mode(int idx) const;
    // c_kl = 2 / (pi sqrt(k^2 + l^2)).
    [[nodiscard]] double normalization(int idx) const;

    // Unnormalized phi_kl and its gradient.
    [[nodiscard]] double raw_value(int idx, double y1, double y2) const;
    [[nodiscard]] Point2 raw_gradient(int idx, double y1, double y2) const;

    [[nodiscard]] double value(int idx, double y1, double y2) const;
    [[nodiscard]] Point2 gradient(int idx, double y1, double y2) const;

    // sin(k pi (t + L) / 2L) for k = 1..K, used for tensor evaluation.
    [[nodiscard]] Eigen::VectorXd axis_sines(double t) const;

private:
    int K_ = 0;
    double L_ = 0.0;
};

SineBasis sine_basis(int modes_per_axis, double half_width);

/// H^1_0(R) norm of sum_i coeffs[i] * normalized mode i. The basis is
/// orthonormal, so this is the Euclidean norm of the coefficients.
double h1_norm(const SineBasis& basis, const Eigen::VectorXd& coeffs);

}  // namespace stabinv

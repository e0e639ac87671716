#pragma once

#include <memory>

#include <Eigen/Dense>

#include "stabinv/geometry.hpp"
#include "stabinv/kernel.hpp"

namespace stabinv {

// Everything needed to discretize A_m except m itself. The source-side
// product (quadrature weight x normalized mode value) is computed once.
class OperatorSetup {
public:
    OperatorSetup(SineBasis basis, ObservationGrid grid, KernelConfig kernel, SourceRegion region = {});

    [[nodiscard]] const SineBasis& basis() const { return basis_; }
    [[nodiscard]] const ObservationGrid& grid() const { return grid_; }
    [[nodiscard]] const KernelConfig& kernel() const { return kernel_; }
    [[nodiscard]] const SourceRegion& region() const { return region_; }
    [[nodiscard]] const SourceQuadrature& quadrature() const { return quad_; }
    [[nodiscard]] const Eigen::VectorXd& sqrt_weights() const { return sqrt_weights_; }
    // One-dimensional factor of the weighted modes: entry (i, k) is
    // w_i * sin(k pi (t_i + L) / 2L) at the i-th quadrature node t_i.
    [[nodiscard]] const Eigen::MatrixXd& axis_modes() const { return axis_modes_; }

    [[nodiscard]] int rows() const { return static_cast<int>(grid_.size()); }
    [[nodiscard]] int cols() const { return basis_.size(); }

private:
    SineBasis basis_;
    ObservationGrid grid_;
    KernelConfig kernel_;
    SourceRegion region_;
    SourceQuadrature quad_;
    Eigen::VectorXd sqrt_weights_;
    Eigen::MatrixXd axis_modes_;
};

// Discretized A_m. Row j is scaled by sqrt(C'(j)) so that the Euclidean norm
// of weighted * coeffs is the discrete L2(V) norm of the data.
struct OperatorMatrix {
    FaultParams m;
    Eigen::MatrixXd weighted;
    Eigen::VectorXd sqrt_weights;

    [[nodiscard]] Eigen::Index rows() const { return weighted.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return weighted.cols(); }
    // Weighted data; its norm is the discrete L2(V) norm.
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& coeffs) const;
};

/// Assembles A_m: entry (j, kl) = sqrt(C'(j)) * sum_q H(m, P_j, y_q) w_q phi_hat_kl(y_q).
/// Throws AssemblyError naming m when the kernel is singular or, with the
/// cutoff disabled, when the fault rises above d0 somewhere over R.
OperatorMatrix assemble(const FaultParams& m, const OperatorSetup& setup);

/// Convenience overload matching the plain parameter list; `quad_order` is
/// the per-cell Gauss–Legendre order on the default 8 x 8 cell layout.
OperatorMatrix assemble(const FaultParams& m, const SineBasis& basis, const ObservationGrid& grid,
                        const KernelConfig& cfg, int quad_order);

/// Pointwise data values A_m u (P_j), i.e. weighted rows divided by sqrt(C'(j)).
Eigen::VectorXd forward(const OperatorMatrix& A, const Eigen::VectorXd& coeffs);

/// Values of A_m u at arbitrary points of the plane x3 = 0, using the source
/// discretization of `setup`.
Eigen::VectorXd data_at(const FaultParams& m, const Eigen::VectorXd& coeffs, const OperatorSetup& setup,
                        const std::vector<Point2>& points);

/// Directional derivative d_q A_m = grad_m A_m . q for a unit vector q.
OperatorMatrix directional_derivative(const FaultParams& m, const Eigen::Vector3d& q_dir,
                                      const OperatorSetup& setup);

// Top-q right singular subspace E_m of a discretized A_m.
struct SvdSubspace {
    Eigen::VectorXd singular_values;  // descending, length = number of modes
    Eigen::MatrixXd right;            // modes x modes, columns orthonormal
    Eigen::MatrixXd left;             // rows x min(rows, modes)
    int q = 0;
    double beta = 0.0;          // threshold implied inside (sigma_{q+1}, sigma_q)
    double relative_gap = 0.0;  // (sigma_q - sigma_{q+1}) / sigma_q

    [[nodiscard]] int dim() const { return static_cast<int>(right.rows()); }
    [[nodiscard]] auto basis() const { return right.leftCols(q); }
    [[nodiscard]] double sigma_q() const { return singular_values[q - 1]; }
    [[nodiscard]] double sigma_next() const;
};

/// Full SVD of the weighted matrix with E_m = span of the first q right
/// singular vectors. Singular vector signs are fixed so that the entry of
/// largest magnitude is positive.
SvdSubspace svd_subspace(const OperatorMatrix& A, int q);

/// Orthogonal projection P_m onto E_m in H^1_0 coordinates.
Eigen::VectorXd project(const SvdSubspace& sub, const Eigen::VectorXd& coeffs);

/// Dense projector U_q U_q^T.
Eigen::MatrixXd projector(const SvdSubspace& sub);

}  // namespace stabinv

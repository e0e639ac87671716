#include "stabinv/operator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>
#include <sstream>

#include "stabinv/errors.hpp"

namespace stabinv {

namespace {

std::string describe(const FaultParams& m)
{
    std::ostringstream out;
    out.precision(17);
    out << "m = (" << m.a << ", " << m.b << ", " << m.d << ")";
    return out.str();
}

void check_fault_depth(const FaultParams& m, const OperatorSetup& setup)
{
    const KernelConfig& cfg = setup.kernel();
    if (cfg.cutoff_enabled) return;
    const double top = max_fault_depth(m, setup.region().half_width);
    if (top > cfg.d0) {
        std::ostringstream msg;
        msg << "fault for " << describe(m) << " reaches depth " << top << " above d0 = " << cfg.d0
            << " and the depth cutoff is disabled";
        throw AssemblyError(msg.str());
    }
}

// Per-node source data that does not depend on the observation point.
// Node (i1, i2) has flat index i1 + n * i2.
struct ActiveNode {
    Eigen::Index index;
    Point2 y;
    double depth;
    double chi;
    double dchi;
};

std::vector<ActiveNode> active_nodes(const FaultParams& m, const OperatorSetup& setup)
{
    const KernelConfig& cfg = setup.kernel();
    const auto& axis = setup.quadrature().axis;
    const std::size_t n = axis.size();
    std::vector<ActiveNode> nodes;
    nodes.reserve(n * n);
    for (std::size_t i2 = 0; i2 < n; ++i2) {
        for (std::size_t i1 = 0; i1 < n; ++i1) {
            ActiveNode node{static_cast<Eigen::Index>(i1 + n * i2), {axis.nodes[i1], axis.nodes[i2]}, 0.0, 1.0, 0.0};
            node.depth = m.a * node.y[0] + m.b * node.y[1] + m.d;
            if (cfg.cutoff_enabled) {
                node.chi = cutoff_chi(node.depth, cfg.d0);
                if (node.chi == 0.0) continue;
                node.dchi = cutoff_chi_derivative(node.depth, cfg.d0);
            }
            nodes.push_back(node);
        }
    }
    return nodes;
}

// Samples the integrand on grid-rows x quadrature-nodes (zero at nodes removed
// by the cutoff) and contracts it with the tensor sine basis in two stages:
// first along y2, then along y1, so the cost is rows * n * K * (n + K) instead
// of rows * n^2 * K^2. `eval(x1, x2, node, r2)` returns the integrand and the
// squared source distance.
template <class Eval>
OperatorMatrix assemble_with(const FaultParams& m, const OperatorSetup& setup, Eval&& eval)
{
    check_fault_depth(m, setup);
    const auto& grid = setup.grid();
    const Eigen::Index rows = setup.rows();
    const Eigen::Index n = static_cast<Eigen::Index>(setup.quadrature().axis.size());
    const int K = setup.basis().modes_per_axis();
    const std::vector<ActiveNode> nodes = active_nodes(m, setup);

    std::vector<double> x1(rows), x2(rows);
    for (Eigen::Index j = 0; j < rows; ++j) {
        x1[j] = grid.points[j][0];
        x2[j] = grid.points[j][1];
    }

    // Column q = i1 + n * i2 of `kernel`; reshaped below as (rows * n) x n.
    Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(rows, n * n);
    double min_r2 = std::numeric_limits<double>::infinity();
    for (const ActiveNode& node : nodes) {
        double* col = kernel.col(node.index).data();
        double local_min = min_r2;
        for (Eigen::Index j = 0; j < rows; ++j) {
            double r2 = 0.0;
            col[j] = eval(x1[j], x2[j], node, r2);
            local_min = std::min(local_min, r2);
        }
        min_r2 = local_min;
    }
    if (!(min_r2 > 0.0)) {
        throw AssemblyError("assembly failed for " + describe(m) +
                            ": kernel singular (an observation point lies on the fault)");
    }

    const Eigen::Map<const Eigen::MatrixXd> stacked(kernel.data(), rows * n, n);
    const Eigen::MatrixXd stage1 = stacked * setup.axis_modes();  // (rows * n) x K, indexed by l
    OperatorMatrix A;
    A.m = m;
    A.sqrt_weights = setup.sqrt_weights();
    A.weighted.resize(rows, setup.cols());
    for (int l = 0; l < K; ++l) {
        const Eigen::Map<const Eigen::MatrixXd> slice(stage1.col(l).data(), rows, n);
        const Eigen::MatrixXd by_k = slice * setup.axis_modes();  // rows x K, indexed by k
        for (int k = 0; k < K; ++k) {
            const int idx = k * K + l;
            A.weighted.col(idx) = setup.basis().normalization(idx) * by_k.col(k).cwiseProduct(A.sqrt_weights);
        }
    }
    if (!A.weighted.allFinite()) throw AssemblyError("non-finite operator entries for " + describe(m));
    return A;
}

constexpr double kInv2Pi = 0.5 / std::numbers::pi;

// Same integrand as kernel_H, using the precomputed node data.
inline double fast_kernel(const FaultParams& m, double x1, double x2, const ActiveNode& node, double& r2)
{
    const double D1 = x1 - node.y[0];
    const double D2 = x2 - node.y[1];
    const double D3 = -node.depth;
    r2 = D1 * D1 + D2 * D2 + D3 * D3;
    const double s = -m.a * D1 - m.b * D2 + D3;
    return kInv2Pi * node.chi * s / (r2 * std::sqrt(r2));
}

// Directional m-derivative of the integrand; mirrors kernel_H_dm.
inline double fast_kernel_dm(const FaultParams& m, double x1, double x2, const ActiveNode& node,
                             const Eigen::Vector3d& q, double& r2)
{
    const double D1 = x1 - node.y[0];
    const double D2 = x2 - node.y[1];
    const double D3 = -node.depth;
    r2 = D1 * D1 + D2 * D2 + D3 * D3;
    const double s = -m.a * D1 - m.b * D2 + D3;
    const double inv_r3 = 1.0 / (r2 * std::sqrt(r2));
    const double inv_r5 = inv_r3 / r2;
    const double dY3 = q[0] * node.y[0] + q[1] * node.y[1] + q[2];
    const double ds = q[0] * (-D1 - node.y[0]) + q[1] * (-D2 - node.y[1]) - q[2];
    const double dinv_r3 = 3.0 * inv_r5 * D3 * dY3;
    return kInv2Pi * (node.chi * (ds * inv_r3 + s * dinv_r3) + node.dchi * dY3 * s * inv_r3);
}

}  // namespace

OperatorSetup::OperatorSetup(SineBasis basis, ObservationGrid grid, KernelConfig kernel, SourceRegion region)
    : basis_(std::move(basis)), grid_(std::move(grid)), kernel_(kernel), region_(region)
{
    kernel_.validate();
    if (grid_.size() == 0) throw InvalidArgument("observation grid is empty");
    if (std::abs(basis_.half_width() - region_.half_width) > 1e-12 * region_.half_width)
        throw InvalidArgument("sine basis half width must match the source region");
    quad_ = source_quadrature(region_);

    sqrt_weights_.resize(static_cast<Eigen::Index>(grid_.size()));
    for (std::size_t j = 0; j < grid_.size(); ++j) {
        if (!(grid_.weights[j] > 0.0)) throw InvalidArgument("observation weights must be positive");
        sqrt_weights_[static_cast<Eigen::Index>(j)] = std::sqrt(grid_.weights[j]);
    }

    const auto& axis = quad_.axis;
    const Eigen::Index n = static_cast<Eigen::Index>(axis.size());
    axis_modes_.resize(n, basis_.modes_per_axis());
    for (Eigen::Index i = 0; i < n; ++i)
        axis_modes_.row(i) = axis.weights[i] * basis_.axis_sines(axis.nodes[i]).transpose();
}

Eigen::VectorXd OperatorMatrix::apply(const Eigen::VectorXd& coeffs) const
{
    if (coeffs.size() != weighted.cols())
        throw InvalidArgument("operator expects " + std::to_string(weighted.cols()) + " coefficients, got " +
                              std::to_string(coeffs.size()));
    return weighted * coeffs;
}

OperatorMatrix assemble(const FaultParams& m, const OperatorSetup& setup)
{
    return assemble_with(m, setup, [&](double x1, double x2, const ActiveNode& node, double& r2) {
        return fast_kernel(m, x1, x2, node, r2);
    });
}

OperatorMatrix assemble(const FaultParams& m, const SineBasis& basis, const ObservationGrid& grid,
                        const KernelConfig& cfg, int quad_order)
{
    SourceRegion region;
    region.half_width = basis.half_width();
    region.order = quad_order;
    return assemble(m, OperatorSetup(basis, grid, cfg, region));
}

Eigen::VectorXd forward(const OperatorMatrix& A, const Eigen::VectorXd& coeffs)
{
    return A.apply(coeffs).cwiseQuotient(A.sqrt_weights);
}

Eigen::VectorXd data_at(const FaultParams& m, const Eigen::VectorXd& coeffs, const OperatorSetup& setup,
                        const std::vector<Point2>& points)
{
    ObservationGrid probe;
    probe.points = points;
    probe.weights.assign(points.size(), 1.0);
    probe.half_width = setup.grid().half_width;
    probe.n_per_axis = 0;
    probe.rule = "probe";
    const OperatorSetup local(setup.basis(), std::move(probe), setup.kernel(), setup.region());
    return forward(assemble(m, local), coeffs);
}

OperatorMatrix directional_derivative(const FaultParams& m, const Eigen::Vector3d& q_dir,
                                      const OperatorSetup& setup)
{
    if (std::abs(q_dir.norm() - 1.0) > 1e-12) throw InvalidArgument("directional_derivative: q must be a unit vector");
    return assemble_with(m, setup,
                         [&](double x1, double x2, const ActiveNode& node, double& r2) {
                             return fast_kernel_dm(m, x1, x2, node, q_dir, r2);
                         });
}

double SvdSubspace::sigma_next() const
{
    return q < singular_values.size() ? singular_values[q] : 0.0;
}

SvdSubspace svd_subspace(const OperatorMatrix& A, int q)
{
    const int n = static_cast<int>(A.cols());
    if (q < 1 || q >= n)
        throw InvalidArgument("svd_subspace: q must satisfy 1 <= q < " + std::to_string(n) + ", got " +
                              std::to_string(q));
    SvdSubspace sub;
    sub.q = q;
    sub.singular_values = Eigen::VectorXd::Zero(n);
    if (A.rows() > 2 * A.cols()) {
        // Tall case: A = Q R, then SVD of the square factor R.
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.weighted);
        const Eigen::MatrixXd R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
        sub.singular_values = svd.singularValues();
        sub.right = svd.matrixV();
        sub.left = qr.householderQ() * (Eigen::MatrixXd(A.rows(), n) << svd.matrixU(),
                                        Eigen::MatrixXd::Zero(A.rows() - n, n)).finished();
    } else {
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A.weighted, Eigen::ComputeThinU | Eigen::ComputeFullV);
        sub.singular_values.head(svd.singularValues().size()) = svd.singularValues();
        sub.right = svd.matrixV();
        sub.left = svd.matrixU();
    }
    for (int i = 0; i < n; ++i) {
        Eigen::Index arg = 0;
        sub.right.col(i).cwiseAbs().maxCoeff(&arg);
        if (sub.right(arg, i) < 0.0) {
            sub.right.col(i) *= -1.0;
            if (i < sub.left.cols()) sub.left.col(i) *= -1.0;
        }
    }
    const double sq = sub.sigma_q();
    const double next = sub.sigma_next();
    sub.beta = 0.5 * (sq + next);
    sub.relative_gap = sq > 0.0 ? (sq - next) / sq : 0.0;
    return sub;
}

Eigen::VectorXd project(const SvdSubspace& sub, const Eigen::VectorXd& coeffs)
{
    if (coeffs.size() != sub.dim())
        throw InvalidArgument("project: expected " + std::to_string(sub.dim()) + " coefficients, got " +
                              std::to_string(coeffs.size()));
    const auto U = sub.basis();
    return U * (U.transpose() * coeffs);
}

Eigen::MatrixXd projector(const SvdSubspace& sub)
{
    const auto U = sub.basis();
    return U * U.transpose();
}

}  // namespace stabinv

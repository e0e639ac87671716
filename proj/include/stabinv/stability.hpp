#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabinv/geometry.hpp"
#include "stabinv/operator.hpp"

namespace stabinv {

// Two discretizations of the same A_m: a dense Gauss–Legendre rule on V that
// stands in for the continuous L2(V) norm, and the n x n trapezoid grid of
// the discrete problem.
struct StabilityContext {
    ParamBox box;
    std::shared_ptr<const OperatorSetup> continuous;
    std::shared_ptr<const OperatorSetup> discrete;
};

struct StabilityContextOptions {
    int modes_per_axis = 8;
    SourceRegion region;
    KernelConfig kernel;
    ParamBox box;
    int discrete_n = 33;
    int dense_cells = 8;
    int dense_order = 6;
};

StabilityContext make_stability_context(const StabilityContextOptions& opts);

struct StabilityConfig {
    double A1 = 0.0;  // <= 0 selects 0.05 x median data norm of unit slips
    double A2 = 1.0;
    int q = 5;
    int trials = 1000;
    std::uint64_t seed = 1;
    double pair_separation_min = 0.1;
    int pilot_samples = 32;
    int histogram_bins = 20;
    unsigned threads = 1;

    void validate() const;
};

struct TrialRecord {
    int index = 0;
    bool skipped = false;
    std::string skip_reason;
    FaultParams m, m_prime;
    double separation = 0.0;
    double target_norm = 0.0;     // ||A_{m'} v|| (continuous)
    double ratio = 0.0;           // min_u ||A_m u - A_{m'} v|| / |m - m'|, continuous
    double ratio_discrete = 0.0;  // same on the discrete grid
    Eigen::VectorXd u, v;         // H^1_0 coefficients; u is the continuous minimizer
};

struct Histogram {
    double log10_lo = 0.0;
    double log10_hi = 0.0;
    std::vector<int> counts;

    [[nodiscard]] int mass() const;
};

struct StabilityReport {
    std::string kind;  // "pairs" or "fixed_target"
    double c_hat = 0.0;
    double c_hat_discrete = 0.0;
    double min_discrete_over_continuous = 0.0;
    int half_factor_violations = 0;  // pairs with discrete < 0.5 x continuous
    int completed = 0;
    int skipped_constraint = 0;
    int skipped_separation = 0;
    double A1 = 0.0;
    double beta_min = 0.0;  // smallest sigma_q seen (empirical uniform beta)
    double min_relative_gap = 0.0;
    Histogram histogram;
    TrialRecord argmin;
    std::vector<TrialRecord> trials;
    std::vector<std::pair<std::string, std::string>> metadata;

    void write_summary(std::ostream& out) const;
    void write_trials_csv(std::ostream& out) const;
};

/// Default A1: 0.05 x median of ||A_m v|| over unit v in E_m at random m.
double default_A1(const StabilityContext& ctx, int q, std::uint64_t seed, int samples);

/// Samples pairs (m, m') in B with |m - m'| >= pair_separation_min, v in
/// E_{m'} with ||v|| <= A2 and ||A_{m'} v|| >= A1, and records
/// min over u in E_m of ||A_m u - A_{m'} v|| / |m - m'| in both norms.
StabilityReport empirical_lipschitz(const StabilityConfig& cfg, const StabilityContext& ctx);

/// Fixed target A_{m0} v0: min over u in E_m of ||A_m u - A_{m0} v0|| / |m - m0|.
/// v0 is any nonzero coefficient vector, not necessarily in E_{m0}.
StabilityReport fixed_target_lipschitz(const FaultParams& m0, const Eigen::VectorXd& v0,
                                       const StabilityConfig& cfg, const StabilityContext& ctx);

// Quadrature order check of the observation rule.
struct TestFunction {
    std::string name;
    std::function<Eigen::VectorXd(const std::vector<Point2>&)> eval;
    double exact = 0.0;
};

struct QuadratureCheck {
    struct Series {
        std::string name;
        std::vector<int> n;
        std::vector<int> M;
        std::vector<double> error;
        double slope = 0.0;  // NaN when fewer than two nonzero errors
        bool exact = false;  // every error is zero to rounding
    };
    std::vector<Series> series;
};

TestFunction constant_test_function(double value, double half_width = 200.0);

/// cos(x1 / s) cos(x2 / s); integral (2 s sin(L / s))^2 over [-L, L]^2.
TestFunction cosine_test_function(double s, double half_width = 200.0);

/// Point values of A_m u with the source discretization of `setup`. The
/// reference integral comes from a composite Gauss–Legendre rule with
/// `oracle_cells` x `oracle_order` nodes per axis.
TestFunction forward_data_test_function(const FaultParams& m, const Eigen::VectorXd& coeffs,
                                        const OperatorSetup& setup, int oracle_cells = 32, int oracle_order = 8);

/// Constant, cosine (s = 50 km) and forward data of a random slip in E_m
/// (q = 5) for m drawn from a <= 0.05, b <= 0.05 in magnitude and
/// d in [-60, -40]. Those faults stay deep over all of R, so the data has no
/// features narrower than the coarsest grid spacing.
std::vector<TestFunction> default_test_functions(std::uint64_t seed, const OperatorSetup& setup);

/// Log-log slope of |sum_j C'(j) phi(P_j) - int_V phi| against M_n over the
/// trapezoid grids in n_list. Requires at least three grid sizes.
QuadratureCheck quadrature_order_check(const std::vector<TestFunction>& functions, const std::vector<int>& n_list,
                                       double half_width = 200.0);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct ProjectionCheck {
    std::vector<double> ratios;  // ||P_m - P_{m0}|| / |m - m0|
    double max_ratio = 0.0;
    double median_ratio = 0.0;
    double gap_at_m0 = 0.0;
};

/// Operator-norm distance between two projectors.
double projection_distance(const SvdSubspace& s1, const SvdSubspace& s2);

/// Samples m uniformly in the ball of `radius` around m0 and reports
/// ||P_m - P_{m0}|| / |m - m0|. Throws PreconditionError when the relative
/// gap at m0 is below `min_gap`, or when a sample loses half of it.
ProjectionCheck projection_lipschitz_check(const FaultParams& m0, double radius, int trials, int q,
                                           const OperatorSetup& setup, std::uint64_t seed, double min_gap = 0.1);

/// Largest rank r <= max_q whose relative gap is at least min_gap; 0 if none.
int gapped_rank(const SvdSubspace& sub, int max_q, double min_gap);

struct LocalConstant {
    double value = 0.0;
    Eigen::MatrixXd residual;       // (I - Pi) G, Pi = projection onto A_m E_m
    Eigen::MatrixXd range_basis;    // orthonormal basis of A_m E_m (weighted)
    Eigen::VectorXd minimizer;      // coefficients in E_m of the minimizing unit v
    SvdSubspace subspace;
};

/// Local constant of the uniform estimate at m along q_dir:
///   min over unit v in the admissible cone of E_m of ||(I - Pi)(d_q A_m + A_m d_q P_m) v||,
/// with d_q P_m by central differences of projectors (step 1e-4). The cone is
/// ||A_m v|| >= (A1 / A2) ||v||.
LocalConstant local_constant(const FaultParams& m, const Eigen::Vector3d& q_dir, int q, double A1, double A2,
                             const OperatorSetup& setup, double min_gap = 1e-3, double fd_step = 1e-4);

/// min over u in span(columns of B) of ||B x - target||, via Householder QR.
double least_squares_residual(const Eigen::MatrixXd& B, const Eigen::VectorXd& target,
                              Eigen::VectorXd* solution = nullptr);

}  // namespace stabinv

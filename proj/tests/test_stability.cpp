#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "stabinv/errors.hpp"
#include "stabinv/random.hpp"
#include "stabinv/stability.hpp"

using namespace stabinv;

namespace {

StabilityContext small_context()
{
    StabilityContextOptions opts;
    opts.modes_per_axis = 4;
    opts.discrete_n = 33;
    opts.dense_cells = 4;
    opts.dense_order = 6;
    return make_stability_context(opts);
}

StabilityConfig small_config(int trials = 16)
{
    StabilityConfig cfg;
    cfg.q = 3;
    cfg.trials = trials;
    cfg.seed = 5;
    cfg.pilot_samples = 8;
    cfg.threads = 4;
    return cfg;
}

}  // namespace

TEST(LeastSquares, ResidualIsOrthogonalToRange)
{
    Rng rng = make_stream(1, 0);
    Eigen::MatrixXd B(30, 4);
    Eigen::VectorXd t(30);
    for (int i = 0; i < 30; ++i) {
        t[i] = standard_normal(rng);
        for (int j = 0; j < 4; ++j) B(i, j) = standard_normal(rng);
    }
    Eigen::VectorXd x;
    const double r = least_squares_residual(B, t, &x);
    const Eigen::VectorXd res = t - B * x;
    EXPECT_NEAR(r, res.norm(), 1e-14);
    EXPECT_LT((B.transpose() * res).norm(), 1e-12 * B.norm() * t.norm());
    // Target in the range gives zero residual.
    EXPECT_LT(least_squares_residual(B, B * x), 1e-12 * (B * x).norm());
}

TEST(EmpiricalLipschitz, SmallRunIsPositiveAndConsistent)
{
    const StabilityContext ctx = small_context();
    const StabilityConfig cfg = small_config();
    const StabilityReport r = empirical_lipschitz(cfg, ctx);
    EXPECT_EQ(r.kind, "pairs");
    EXPECT_GT(r.completed, 0);
    EXPECT_GT(r.c_hat, 0.0);
    EXPECT_TRUE(std::isfinite(r.c_hat));
    EXPECT_EQ(r.histogram.mass(), cfg.trials - r.skipped_constraint - r.skipped_separation);
    EXPECT_EQ(r.completed + r.skipped_constraint + r.skipped_separation, cfg.trials);
    EXPECT_GT(r.A1, 0.0);
    for (const auto& t : r.trials) {
        if (t.skipped) continue;
        EXPECT_GE(t.separation, cfg.pair_separation_min);
        EXPECT_GE(t.target_norm, r.A1);
        EXPECT_LE(t.v.norm(), cfg.A2 * (1 + 1e-12));
        EXPECT_GE(t.ratio, r.c_hat);
        EXPECT_GE(t.ratio_discrete, 0.5 * t.ratio);
    }
    EXPECT_EQ(r.argmin.ratio, r.c_hat);
}

TEST(EmpiricalLipschitz, ReproducibleAndThreadIndependent)
{
    const StabilityContext ctx = small_context();
    StabilityConfig cfg = small_config(8);
    std::ostringstream a, b;
    empirical_lipschitz(cfg, ctx).write_trials_csv(a);
    cfg.threads = 1;
    empirical_lipschitz(cfg, ctx).write_trials_csv(b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(EmpiricalLipschitz, ConstraintSkipsAreCounted)
{
    const StabilityContext ctx = small_context();
    StabilityConfig cfg = small_config(24);
    // A1 near the top of the attainable range skips most draws.
    const StabilityReport loose = empirical_lipschitz(cfg, ctx);
    cfg.A1 = 0.8 * default_A1(ctx, cfg.q, cfg.seed, cfg.pilot_samples) / 0.05;
    try {
        const StabilityReport tight = empirical_lipschitz(cfg, ctx);
        EXPECT_GT(tight.skipped_constraint, loose.skipped_constraint);
        for (const auto& t : tight.trials)
            if (t.skipped && t.skip_reason == "constraint") EXPECT_LT(t.target_norm, tight.A1);
    } catch (const ReportError&) {
        SUCCEED() << "every trial skipped";
    }
}

TEST(EmpiricalLipschitz, UnsatisfiableConstraintsAreConfigErrors)
{
    const StabilityContext ctx = small_context();
    StabilityConfig cfg = small_config();
    cfg.A1 = 1e6;
    EXPECT_THROW(empirical_lipschitz(cfg, ctx), ConfigError);
}

TEST(EmpiricalLipschitz, AllSkippedIsReportError)
{
    const StabilityContext ctx = small_context();
    StabilityConfig cfg = small_config(4);
    // Separation larger than the box diameter: no partner can be drawn.
    cfg.pair_separation_min = 1e3;
    EXPECT_THROW(empirical_lipschitz(cfg, ctx), ReportError);
}

TEST(EmpiricalLipschitz, InvalidConfig)
{
    const StabilityContext ctx = small_context();
    StabilityConfig cfg = small_config();
    cfg.trials = 0;
    EXPECT_THROW(empirical_lipschitz(cfg, ctx), ConfigError);
    cfg = small_config();
    cfg.A2 = 0.0;
    EXPECT_THROW(empirical_lipschitz(cfg, ctx), ConfigError);
    cfg = small_config();
    cfg.pair_separation_min = 0.0;
    EXPECT_THROW(empirical_lipschitz(cfg, ctx), ConfigError);
}

TEST(EmpiricalLipschitz, HalvingSeparationKeepsConstant)
{
    const StabilityContext ctx = small_context();
    StabilityConfig cfg = small_config(16);
    cfg.pair_separation_min = 0.2;
    const double wide = empirical_lipschitz(cfg, ctx).c_hat;
    cfg.pair_separation_min = 0.1;
    const double narrow = empirical_lipschitz(cfg, ctx).c_hat;
    EXPECT_GE(narrow, 0.25 * wide);
}

TEST(FixedTarget, PositiveAndRejectsZeroSlip)
{
    const StabilityContext ctx = small_context();
    const StabilityConfig cfg = small_config(8);
    const FaultParams m0{0.3, -0.2, -30.0};
    Rng rng = make_stream(2, 0);
    Eigen::VectorXd v0(16);
    for (int i = 0; i < 16; ++i) v0[i] = standard_normal(rng);
    const StabilityReport r = fixed_target_lipschitz(m0, v0, cfg, ctx);
    EXPECT_EQ(r.kind, "fixed_target");
    EXPECT_GT(r.c_hat, 0.0);
    for (const auto& t : r.trials) {
        if (t.skipped) continue;
        EXPECT_EQ(t.m_prime, m0);
        EXPECT_GE(t.separation, cfg.pair_separation_min);
    }
    EXPECT_THROW(fixed_target_lipschitz(m0, Eigen::VectorXd::Zero(16), cfg, ctx), InvalidArgument);
    EXPECT_THROW(fixed_target_lipschitz(m0, Eigen::VectorXd::Ones(3), cfg, ctx), InvalidArgument);
}

TEST(QuadratureCheck, ConstantIsExact)
{
    const QuadratureCheck c = quadrature_order_check({constant_test_function(2.5)}, {6, 11, 21});
    ASSERT_EQ(c.series.size(), 1u);
    EXPECT_TRUE(c.series[0].exact);
    for (double e : c.series[0].error) EXPECT_EQ(e, 0.0);
}

TEST(QuadratureCheck, CosineHasFirstOrderSlope)
{
    // Closed-form integral of cos(x/50) cos(y/50) over [-200, 200]^2.
    const double one = 100.0 * std::sin(4.0);
    const TestFunction f = cosine_test_function(50.0);
    EXPECT_NEAR(f.exact, one * one, 1e-10);
    const QuadratureCheck c = quadrature_order_check({f}, {6, 11, 21, 41});
    EXPECT_GE(c.series[0].slope, -1.3);
    EXPECT_LE(c.series[0].slope, -0.8);
    EXPECT_EQ(c.series[0].M.back(), 41 * 41);
}

TEST(QuadratureCheck, ForwardDataSlope)
{
    const OperatorSetup setup(sine_basis(8, 150.0), observation_grid(11), KernelConfig{});
    const auto fns = default_test_functions(3, setup);
    ASSERT_EQ(fns.size(), 3u);
    const QuadratureCheck c = quadrature_order_check(fns, {6, 11, 21, 41});
    for (const auto& s : c.series) {
        if (s.exact) continue;
        EXPECT_GE(s.slope, -1.3) << s.name;
        EXPECT_LE(s.slope, -0.8) << s.name;
    }
}

TEST(QuadratureCheck, NeedsThreeGrids)
{
    EXPECT_THROW(quadrature_order_check({constant_test_function(1.0)}, {6, 11}), InvalidArgument);
}

TEST(LogLogSlope, RecoversPowerLaw)
{
    std::vector<double> x{1, 2, 4, 8}, y;
    for (double t : x) y.push_back(3.0 * std::pow(t, -1.5));
    EXPECT_NEAR(loglog_slope(x, y), -1.5, 1e-12);
    EXPECT_TRUE(std::isnan(loglog_slope({1.0, 2.0}, {0.0, 0.0})));
}

TEST(Projection, DistanceProperties)
{
    const OperatorSetup setup(sine_basis(4, 150.0), observation_grid(11), KernelConfig{});
    const SvdSubspace a = svd_subspace(assemble({0.1, 0.0, -30.0}, setup), 3);
    const SvdSubspace b = svd_subspace(assemble({0.5, 0.4, -20.0}, setup), 3);
    EXPECT_NEAR(projection_distance(a, a), 0.0, 1e-13);
    const double d = projection_distance(a, b);
    EXPECT_NEAR(d, projection_distance(b, a), 1e-13);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0 + 1e-12);
    // Operator norm: dominates the action on any unit vector.
    Rng rng = make_stream(4, 0);
    for (int t = 0; t < 20; ++t) {
        Eigen::VectorXd u(16);
        for (int i = 0; i < 16; ++i) u[i] = standard_normal(rng);
        u.normalize();
        EXPECT_LE(((projector(a) - projector(b)) * u).norm(), d * (1 + 1e-12));
    }
}

TEST(Projection, GappedRankAtHorizontalFault)
{
    const OperatorSetup setup(sine_basis(8, 150.0), observation_grid(11), KernelConfig{});
    const SvdSubspace sub = svd_subspace(assemble({0.0, 0.0, -30.0}, setup), 5);
    // Square grid and horizontal fault: sigma_2 = sigma_3 by symmetry.
    EXPECT_NEAR(sub.singular_values[1], sub.singular_values[2], 1e-9 * sub.singular_values[1]);
    const int r = gapped_rank(sub, 5, 0.1);
    EXPECT_EQ(r, 4);
    EXPECT_GE((sub.singular_values[r - 1] - sub.singular_values[r]) / sub.singular_values[r - 1], 0.1);
    EXPECT_EQ(gapped_rank(sub, 5, 2.0), 0);
}

TEST(Projection, LipschitzCheckIsBounded)
{
    const OperatorSetup setup(sine_basis(8, 150.0), observation_grid(11), KernelConfig{});
    const ProjectionCheck c = projection_lipschitz_check({0.0, 0.0, -30.0}, 0.05, 12, 4, setup, 9);
    ASSERT_EQ(c.ratios.size(), 12u);
    for (double r : c.ratios) EXPECT_TRUE(std::isfinite(r));
    EXPECT_GT(c.median_ratio, 0.0);
    EXPECT_LT(c.max_ratio / c.median_ratio, 10.0);
    EXPECT_GE(c.gap_at_m0, 0.1);
}

TEST(Projection, SplitClusterIsPreconditionError)
{
    const OperatorSetup setup(sine_basis(8, 150.0), observation_grid(11), KernelConfig{});
    try {
        projection_lipschitz_check({0.0, 0.0, -30.0}, 0.05, 4, 2, setup, 9);
        FAIL() << "expected PreconditionError";
    } catch (const PreconditionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("sigma_q"), std::string::npos);
        EXPECT_NE(msg.find("sigma_q+1"), std::string::npos);
    }
}

TEST(LocalConstant, PositiveWithOrthogonalResidual)
{
    const OperatorSetup setup(sine_basis(6, 150.0), observation_grid(11), KernelConfig{});
    const LocalConstant lc = local_constant({0.0, 0.0, -30.0}, Eigen::Vector3d::UnitZ(), 4, 0.0, 1.0, setup);
    EXPECT_GT(lc.value, 0.0);
    EXPECT_LT((lc.range_basis.transpose() * lc.range_basis - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-12);
    EXPECT_LT((lc.range_basis.transpose() * lc.residual).norm(), 1e-10 * lc.residual.norm());
    EXPECT_NEAR(lc.minimizer.norm(), 1.0, 1e-12);
    EXPECT_NEAR((lc.residual * lc.minimizer).norm(), lc.value, 1e-10 * lc.value);
}

TEST(LocalConstant, LowerBoundsNearbyRatio)
{
    const OperatorSetup setup(sine_basis(6, 150.0), observation_grid(11), KernelConfig{});
    const FaultParams m{0.2, -0.1, -35.0};
    const Eigen::Vector3d q = Eigen::Vector3d(0.2, 0.3, 0.9).normalized();
    const int rank = 3;
    const LocalConstant lc = local_constant(m, q, rank, 0.0, 1.0, setup);
    const double h = 1e-2;
    const FaultParams mp = FaultParams::from(m.vec() + h * q);
    const OperatorMatrix Ap = assemble(mp, setup);
    const SvdSubspace sub_p = svd_subspace(Ap, rank);
    const Eigen::VectorXd v = sub_p.basis() * lc.minimizer;
    const OperatorMatrix A = assemble(m, setup);
    const double ratio = least_squares_residual(A.weighted * lc.subspace.basis(), Ap.apply(v)) / h;
    EXPECT_LE(lc.value, 1.2 * ratio);
    EXPECT_GE(lc.value, 0.8 * ratio);
}

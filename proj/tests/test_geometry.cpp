#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "stabinv/errors.hpp"
#include "stabinv/geometry.hpp"
#include "stabinv/quadrature.hpp"

using namespace stabinv;

TEST(FaultPoint, Examples)
{
    EXPECT_EQ(fault_point({0, 0, -20}, 0, 0), (Point3{0, 0, -20}));
    EXPECT_EQ(fault_point({1, -1, -30}, 2, 3), (Point3{2, 3, -31}));
    EXPECT_EQ(fault_point({2, 2, -10}, 150, 150), (Point3{150, 150, 590}));
}

TEST(FaultPoint, AffineInParameters)
{
    const double y1 = 12.5, y2 = -40.0;
    const FaultParams m{0.3, -0.7, -25.0};
    const double base = fault_point(m, y1, y2)[2];
    EXPECT_DOUBLE_EQ(fault_point({m.a + 1, m.b, m.d}, y1, y2)[2] - base, y1);
    EXPECT_DOUBLE_EQ(fault_point({m.a, m.b + 1, m.d}, y1, y2)[2] - base, y2);
    EXPECT_DOUBLE_EQ(fault_point({m.a, m.b, m.d + 1}, y1, y2)[2] - base, 1.0);
}

TEST(ParamBox, DefaultsAndValidation)
{
    ParamBox box;
    EXPECT_NO_THROW(box.validate());
    EXPECT_EQ(box.d.lo, -60.0);
    EXPECT_EQ(box.d.hi, -10.0);
    box.d = {-10.0, -60.0};
    try {
        box.validate();
        FAIL() << "inverted interval accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("box.d"), std::string::npos);
    }
}

TEST(ParamBox, UnitMapRoundTrip)
{
    const ParamBox box;
    const FaultParams m{1.0, -0.5, -35.0};
    const Eigen::Vector3d t = box.to_unit(m);
    EXPECT_NEAR(t[0], 0.75, 1e-15);
    EXPECT_NEAR(t[1], 0.375, 1e-15);
    EXPECT_NEAR(t[2], 0.5, 1e-15);
    const FaultParams back = box.from_unit(t);
    EXPECT_NEAR(back.a, m.a, 1e-14);
    EXPECT_NEAR(back.b, m.b, 1e-14);
    EXPECT_NEAR(back.d, m.d, 1e-13);
    EXPECT_TRUE(box.contains(m));
    EXPECT_FALSE(box.contains({0, 0, -5}));
}

TEST(ObservationGrid, ElevenByEleven)
{
    const ObservationGrid g = observation_grid(11);
    EXPECT_EQ(g.size(), 121u);
    for (const auto& p : g.points) {
        EXPECT_LE(std::abs(p[0]), 200.0);
        EXPECT_LE(std::abs(p[1]), 200.0);
    }
}

TEST(ObservationGrid, WeightSumIsArea)
{
    for (int n : {2, 3, 6, 11, 21, 33, 41, 100}) {
        const ObservationGrid g = observation_grid(n);
        EXPECT_NEAR(g.weight_sum() / 160000.0, 1.0, 1e-12) << "n=" << n;
    }
}

TEST(ObservationGrid, TwoPointsPerAxisAreCorners)
{
    const ObservationGrid g = observation_grid(2);
    ASSERT_EQ(g.size(), 4u);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_DOUBLE_EQ(g.weights[j], 40000.0);
        EXPECT_DOUBLE_EQ(std::abs(g.points[j][0]), 200.0);
        EXPECT_DOUBLE_EQ(std::abs(g.points[j][1]), 200.0);
    }
}

TEST(ObservationGrid, InteriorEdgeCornerWeights)
{
    const ObservationGrid g = observation_grid(5);
    const double h = 100.0;
    double corner = 0, edge = 0, interior = 0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const bool bx = std::abs(g.points[j][0]) == 200.0;
        const bool by = std::abs(g.points[j][1]) == 200.0;
        if (bx && by) corner = g.weights[j];
        else if (bx || by) edge = g.weights[j];
        else interior = g.weights[j];
    }
    EXPECT_DOUBLE_EQ(interior, h * h);
    EXPECT_DOUBLE_EQ(edge, h * h / 2);
    EXPECT_DOUBLE_EQ(corner, h * h / 4);
}

TEST(ObservationGrid, RejectsTooFewPoints)
{
    EXPECT_THROW(observation_grid(1), InvalidArgument);
}

namespace {

// Dense tensor Gauss–Legendre rule on [-L, L]^2 for gradient integrals.
struct Dense2D {
    Rule1D r;
    explicit Dense2D(double L) : r(composite_gauss_legendre(-L, L, 16, 8)) {}

    template <class F>
    double integrate(F f) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = 0; j < r.size(); ++j) s += r.weights[i] * r.weights[j] * f(r.nodes[i], r.nodes[j]);
        return s;
    }
};

}  // namespace

TEST(SineBasis, FirstModeDirichletEnergy)
{
    const SineBasis basis = sine_basis(1, 150.0);
    const Dense2D q(150.0);
    const double energy = q.integrate([&](double y1, double y2) {
        const Point2 g = basis.raw_gradient(0, y1, y2);
        return g[0] * g[0] + g[1] * g[1];
    });
    EXPECT_NEAR(energy, std::numbers::pi * std::numbers::pi / 2.0, 1e-12);
}

TEST(SineBasis, RawNormIndependentOfHalfWidth)
{
    for (double L : {1.0, 37.0, 150.0}) {
        const SineBasis basis = sine_basis(3, L);
        const Dense2D q(L);
        const int idx = 1 * 3 + 2;  // (k, l) = (2, 3)
        const double energy = q.integrate([&](double y1, double y2) {
            const Point2 g = basis.raw_gradient(idx, y1, y2);
            return g[0] * g[0] + g[1] * g[1];
        });
        EXPECT_NEAR(energy, std::numbers::pi * std::numbers::pi / 4.0 * 13.0, 1e-10) << "L=" << L;
    }
}

TEST(SineBasis, ModeIndexing)
{
    const SineBasis basis = sine_basis(4, 150.0);
    EXPECT_EQ(basis.size(), 16);
    EXPECT_EQ(basis.mode(0), (std::array<int, 2>{1, 1}));
    EXPECT_EQ(basis.mode(1), (std::array<int, 2>{1, 2}));
    EXPECT_EQ(basis.mode(4), (std::array<int, 2>{2, 1}));
    EXPECT_NEAR(basis.normalization(0), 2.0 / (std::numbers::pi * std::sqrt(2.0)), 1e-15);
}

TEST(SineBasis, VanishesOnBoundary)
{
    const SineBasis basis = sine_basis(4, 150.0);
    for (int idx = 0; idx < basis.size(); ++idx) {
        EXPECT_NEAR(basis.value(idx, -150.0, 20.0), 0.0, 1e-15);
        EXPECT_NEAR(basis.value(idx, 150.0, -70.0), 0.0, 1e-14);
        EXPECT_NEAR(basis.value(idx, 33.0, 150.0), 0.0, 1e-14);
    }
}

TEST(SineBasis, GramMatrixIsIdentity)
{
    for (int K = 1; K <= 4; ++K) {
        const SineBasis basis = sine_basis(K, 150.0);
        const Dense2D q(150.0);
        for (int i = 0; i < basis.size(); ++i) {
            for (int j = 0; j <= i; ++j) {
                const double g = q.integrate([&](double y1, double y2) {
                    const Point2 a = basis.gradient(i, y1, y2);
                    const Point2 b = basis.gradient(j, y1, y2);
                    return a[0] * b[0] + a[1] * b[1];
                });
                EXPECT_NEAR(g, i == j ? 1.0 : 0.0, 1e-10) << "K=" << K << " i=" << i << " j=" << j;
            }
        }
    }
}

TEST(H1Norm, MatchesQuadrature)
{
    const SineBasis basis = sine_basis(4, 150.0);
    EXPECT_EQ(h1_norm(basis, Eigen::VectorXd::Zero(16)), 0.0);
    EXPECT_DOUBLE_EQ(h1_norm(basis, Eigen::VectorXd::Unit(16, 0)), 1.0);

    std::mt19937_64 rng(42);
    std::normal_distribution<double> normal;
    Eigen::VectorXd c(16);
    for (auto& v : c) v = normal(rng);
    const Dense2D q(150.0);
    const double energy = q.integrate([&](double y1, double y2) {
        double gx = 0.0, gy = 0.0;
        for (int i = 0; i < 16; ++i) {
            const Point2 g = basis.gradient(i, y1, y2);
            gx += c[i] * g[0];
            gy += c[i] * g[1];
        }
        return gx * gx + gy * gy;
    });
    EXPECT_NEAR(h1_norm(basis, c) / std::sqrt(energy), 1.0, 1e-6);
    EXPECT_THROW(h1_norm(basis, Eigen::VectorXd::Zero(15)), InvalidArgument);
}

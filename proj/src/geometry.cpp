#include "stabinv/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "stabinv/errors.hpp"

namespace stabinv {

double distance(const FaultParams& m1, const FaultParams& m2)
{
    return (m1.vec() - m2.vec()).norm();
}

void ParamBox::validate() const
{
    const auto check = [](const Interval& iv, const char* name) {
        if (!(std::isfinite(iv.lo) && std::isfinite(iv.hi)))
            throw ConfigError(std::string("box.") + name + ": bounds must be finite");
        if (!(iv.lo < iv.hi)) {
            std::ostringstream msg;
            msg << "box." << name << ": lower bound " << iv.lo << " must be below upper bound " << iv.hi;
            throw ConfigError(msg.str());
        }
    };
    check(a, "a");
    check(b, "b");
    check(d, "d");
}

bool ParamBox::contains(const FaultParams& m) const
{
    return a.contains(m.a) && b.contains(m.b) && d.contains(m.d);
}

Eigen::Vector3d ParamBox::to_unit(const FaultParams& m) const
{
    return {(m.a - a.lo) / a.width(), (m.b - b.lo) / b.width(), (m.d - d.lo) / d.width()};
}

FaultParams ParamBox::from_unit(const Eigen::Vector3d& t) const
{
    return {a.lo + t[0] * a.width(), b.lo + t[1] * b.width(), d.lo + t[2] * d.width()};
}

Point3 fault_point(const FaultParams& m, double y1, double y2)
{
    return {y1, y2, m.a * y1 + m.b * y2 + m.d};
}

void SourceRegion::validate() const
{
    if (!(half_width > 0.0)) throw InvalidArgument("source region half width must be positive");
    if (cells_per_axis < 1) throw InvalidArgument("source quadrature needs at least one cell per axis");
    if (order < 2) throw InvalidArgument("source quadrature order must be >= 2");
}

SourceQuadrature source_quadrature(const SourceRegion& region)
{
    region.validate();
    return {composite_gauss_legendre(-region.half_width, region.half_width, region.cells_per_axis,
                                     region.order)};
}

double ObservationGrid::weight_sum() const
{
    // Compensated sum.
    double sum = 0.0;
    double comp = 0.0;
    for (double w : weights) {
        const double y = w - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum;
}

std::string ObservationGrid::describe() const
{
    std::ostringstream out;
    out << rule << ":" << n_per_axis << "x" << n_per_axis << ":" << half_width;
    return out.str();
}

namespace {

ObservationGrid tensor_grid(const Rule1D& axis, double half_width, std::string rule)
{
    ObservationGrid grid;
    grid.half_width = half_width;
    grid.n_per_axis = static_cast<int>(axis.size());
    grid.rule = std::move(rule);
    grid.points.reserve(axis.size() * axis.size());
    grid.weights.reserve(axis.size() * axis.size());
    for (std::size_t i = 0; i < axis.size(); ++i) {
        for (std::size_t j = 0; j < axis.size(); ++j) {
            grid.points.push_back({axis.nodes[i], axis.nodes[j]});
            grid.weights.push_back(axis.weights[i] * axis.weights[j]);
        }
    }
    return grid;
}

}  // namespace

ObservationGrid observation_grid(int n_per_axis, double half_width)
{
    if (n_per_axis < 2) throw InvalidArgument("observation_grid: n_per_axis must be >= 2");
    if (!(half_width > 0.0)) throw InvalidArgument("observation_grid: half width must be positive");
    return tensor_grid(trapezoid(-half_width, half_width, n_per_axis), half_width, "trapezoid");
}

ObservationGrid gauss_observation_grid(int cells_per_axis, int order, double half_width)
{
    if (!(half_width > 0.0)) throw InvalidArgument("gauss_observation_grid: half width must be positive");
    return tensor_grid(composite_gauss_legendre(-half_width, half_width, cells_per_axis, order),
                       half_width, "gauss");
}

SineBasis::SineBasis(int modes_per_axis, double half_width) : K_(modes_per_axis), L_(half_width)
{
    if (modes_per_axis < 1) throw InvalidArgument("sine_basis: K must be >= 1");
    if (!(half_width > 0.0)) throw InvalidArgument("sine_basis: L must be positive");
}

std::array<int, 2> SineBasis::mode(int idx) const
{
    return {idx / K_ + 1, idx % K_ + 1};
}

double SineBasis::normalization(int idx) const
{
    const auto [k, l] = mode(idx);
    return 2.0 / (std::numbers::pi * std::sqrt(static_cast<double>(k * k + l * l)));
}

double SineBasis::raw_value(int idx, double y1, double y2) const
{
    const auto [k, l] = mode(idx);
    const double s = std::numbers::pi / (2.0 * L_);
    return std::sin(k * s * (y1 + L_)) * std::sin(l * s * (y2 + L_));
}

Point2 SineBasis::raw_gradient(int idx, double y1, double y2) const
{
    const auto [k, l] = mode(idx);
    const double s = std::numbers::pi / (2.0 * L_);
    const double u1 = k * s * (y1 + L_);
    const double u2 = l * s * (y2 + L_);
    return {k * s * std::cos(u1) * std::sin(u2), l * s * std::sin(u1) * std::cos(u2)};
}

double SineBasis::value(int idx, double y1, double y2) const
{
    return normalization(idx) * raw_value(idx, y1, y2);
}

Point2 SineBasis::gradient(int idx, double y1, double y2) const
{
    const double c = normalization(idx);
    const Point2 g = raw_gradient(idx, y1, y2);
    return {c * g[0], c * g[1]};
}

Eigen::VectorXd SineBasis::axis_sines(double t) const
{
    Eigen::VectorXd out(K_);
    const double s = std::numbers::pi / (2.0 * L_);
    for (int k = 1; k <= K_; ++k) out[k - 1] = std::sin(k * s * (t + L_));
    return out;
}

SineBasis sine_basis(int modes_per_axis, double half_width)
{
    return SineBasis(modes_per_axis, half_width);
}

double h1_norm(const SineBasis& basis, const Eigen::VectorXd& coeffs)
{
    if (coeffs.size() != basis.size())
        throw InvalidArgument("h1_norm: expected " + std::to_string(basis.size()) + " coefficients, got " +
                              std::to_string(coeffs.size()));
    return coeffs.norm();
}

}  // namespace stabinv

#include "stabinv/stability.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "stabinv/errors.hpp"
#include "stabinv/parallel.hpp"
#include "stabinv/random.hpp"

namespace stabinv {

namespace {

constexpr std::uint64_t kPilotStream = 0x70696c6f74ULL;
constexpr std::uint64_t kTrialStream = 0x747269616cULL;
constexpr std::uint64_t kProjectionStream = 0x70726f6aULL;

FaultParams uniform_in(const ParamBox& box, Rng& rng)
{
    return {uniform(rng, box.a.lo, box.a.hi), uniform(rng, box.b.lo, box.b.hi), uniform(rng, box.d.lo, box.d.hi)};
}

Eigen::Vector3d unit_direction(Rng& rng)
{
    Eigen::Vector3d xi;
    do {
        xi = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};
    } while (xi.norm() < 1e-12);
    return xi.normalized();
}

double box_diameter(const ParamBox& box)
{
    return std::sqrt(box.a.width() * box.a.width() + box.b.width() * box.b.width() + box.d.width() * box.d.width());
}

// Partner of `m` at a log-uniform distance in [min_sep, diam(B)] along a
// random direction, redrawn until it falls inside B. Mixing scales covers the
// local regime (small |m - m'|) as well as well-separated pairs.
bool draw_partner(const FaultParams& m, const ParamBox& box, double min_sep, Rng& rng, FaultParams& out)
{
    const double hi = box_diameter(box);
    if (!(min_sep < hi)) return false;
    for (int attempt = 0; attempt < 200; ++attempt) {
        const double rho = std::exp(uniform(rng, std::log(min_sep), std::log(hi)));
        const FaultParams cand = FaultParams::from(m.vec() + rho * unit_direction(rng));
        if (box.contains(cand)) {
            out = cand;
            return true;
        }
    }
    return false;
}

Eigen::VectorXd random_unit(int dim, Rng& rng)
{
    Eigen::VectorXd c(dim);
    do {
        for (int i = 0; i < dim; ++i) c[i] = standard_normal(rng);
    } while (c.norm() < 1e-12);
    return c.normalized();
}

double median(std::vector<double> values)
{
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string fmt(double x)
{
    std::ostringstream out;
    out << std::setprecision(17) << x;
    return out.str();
}

std::string fmt(const FaultParams& m)
{
    return fmt(m.a) + " " + fmt(m.b) + " " + fmt(m.d);
}

std::string fmt(const Eigen::VectorXd& v)
{
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
    return s;
}

void fill_histogram(StabilityReport& report, int bins)
{
    std::vector<double> logs;
    for (const auto& t : report.trials)
        if (!t.skipped) logs.push_back(std::log10(std::max(t.ratio, std::numeric_limits<double>::min())));
    Histogram& h = report.histogram;
    h.counts.assign(std::max(1, bins), 0);
    if (logs.empty()) return;
    const auto [lo, hi] = std::minmax_element(logs.begin(), logs.end());
    h.log10_lo = std::floor(*lo);
    h.log10_hi = std::max(std::ceil(*hi), h.log10_lo + 1.0);
    const double width = (h.log10_hi - h.log10_lo) / static_cast<double>(h.counts.size());
    for (double x : logs) {
        auto bin = static_cast<std::size_t>((x - h.log10_lo) / width);
        h.counts[std::min(bin, h.counts.size() - 1)] += 1;
    }
}

void summarize(StabilityReport& report, const StabilityConfig& cfg)
{
    report.completed = 0;
    report.c_hat = std::numeric_limits<double>::infinity();
    report.c_hat_discrete = std::numeric_limits<double>::infinity();
    report.min_discrete_over_continuous = std::numeric_limits<double>::infinity();
    report.half_factor_violations = 0;
    for (const auto& t : report.trials) {
        if (t.skipped) {
            (t.skip_reason == "separation" ? report.skipped_separation : report.skipped_constraint) += 1;
            continue;
        }
        ++report.completed;
        if (t.ratio < report.c_hat) {
            report.c_hat = t.ratio;
            report.argmin = t;
        }
        report.c_hat_discrete = std::min(report.c_hat_discrete, t.ratio_discrete);
        if (t.ratio > 0.0) {
            report.min_discrete_over_continuous =
                std::min(report.min_discrete_over_continuous, t.ratio_discrete / t.ratio);
        }
        if (t.ratio_discrete < 0.5 * t.ratio) ++report.half_factor_violations;
    }
    if (report.completed == 0) throw ReportError("all " + std::to_string(report.trials.size()) + " trials were skipped");
    fill_histogram(report, cfg.histogram_bins);
}

void common_metadata(StabilityReport& report, const StabilityConfig& cfg, const StabilityContext& ctx)
{
    const auto& c = *ctx.continuous;
    report.metadata = {
        {"q", std::to_string(cfg.q)},
        {"A1", fmt(report.A1)},
        {"A2", fmt(cfg.A2)},
        {"trials", std::to_string(cfg.trials)},
        {"seed", std::to_string(cfg.seed)},
        {"pair_separation_min", fmt(cfg.pair_separation_min)},
        {"modes_per_axis", std::to_string(c.basis().modes_per_axis())},
        {"source_half_width", fmt(c.region().half_width)},
        {"source_cells", std::to_string(c.region().cells_per_axis)},
        {"source_order", std::to_string(c.region().order)},
        {"cutoff_enabled", c.kernel().cutoff_enabled ? "true" : "false"},
        {"d0", fmt(c.kernel().d0)},
        {"continuous_grid", c.grid().describe()},
        {"discrete_grid", ctx.discrete->grid().describe()},
        {"box_a", fmt(ctx.box.a.lo) + " " + fmt(ctx.box.a.hi)},
        {"box_b", fmt(ctx.box.b.lo) + " " + fmt(ctx.box.b.hi)},
        {"box_d", fmt(ctx.box.d.lo) + " " + fmt(ctx.box.d.hi)},
    };
}

// Per-pair evaluation shared by both estimators. `target_c` / `target_d` are
// the continuous and discrete data of the fixed side.
void evaluate_ratio(TrialRecord& rec, const StabilityContext& ctx, const OperatorMatrix& Ac, const SvdSubspace& sub,
                    const Eigen::VectorXd& target_c, const Eigen::VectorXd& target_d)
{
    const Eigen::MatrixXd U = sub.basis();
    const OperatorMatrix Ad = assemble(rec.m, *ctx.discrete);
    Eigen::VectorXd coeffs;
    rec.ratio = least_squares_residual(Ac.weighted * U, target_c, &coeffs) / rec.separation;
    rec.u = U * coeffs;
    rec.ratio_discrete = least_squares_residual(Ad.weighted * U, target_d) / rec.separation;
}

}  // namespace

StabilityContext make_stability_context(const StabilityContextOptions& opts)
{
    opts.box.validate();
    const SineBasis basis = sine_basis(opts.modes_per_axis, opts.region.half_width);
    StabilityContext ctx;
    ctx.box = opts.box;
    ctx.continuous = std::make_shared<OperatorSetup>(
        basis, gauss_observation_grid(opts.dense_cells, opts.dense_order), opts.kernel, opts.region);
    ctx.discrete = std::make_shared<OperatorSetup>(basis, observation_grid(opts.discrete_n), opts.kernel, opts.region);
    return ctx;
}

void StabilityConfig::validate() const
{
    if (!(A2 > 0.0)) throw ConfigError("A2 must be positive");
    if (A1 < 0.0) throw ConfigError("A1 must be positive (or 0 for the default)");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (!(pair_separation_min > 0.0)) throw ConfigError("pair_separation_min must be positive");
    if (q < 1) throw ConfigError("q must be >= 1");
    if (pilot_samples < 1) throw ConfigError("pilot_samples must be >= 1");
}

int Histogram::mass() const
{
    int total = 0;
    for (int c : counts) total += c;
    return total;
}

double least_squares_residual(const Eigen::MatrixXd& B, const Eigen::VectorXd& target, Eigen::VectorXd* solution)
{
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
    const Eigen::VectorXd x = qr.solve(target);
    if (solution) *solution = x;
    return (target - B * x).norm();
}

double default_A1(const StabilityContext& ctx, int q, std::uint64_t seed, int samples)
{
    std::vector<double> norms(samples);
    for (int i = 0; i < samples; ++i) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(i), kPilotStream);
        const FaultParams m = uniform_in(ctx.box, rng);
        const OperatorMatrix A = assemble(m, *ctx.continuous);
        const SvdSubspace sub = svd_subspace(A, q);
        norms[i] = A.apply(sub.basis() * random_unit(q, rng)).norm();
    }
    return 0.05 * median(norms);
}

StabilityReport empirical_lipschitz(const StabilityConfig& cfg, const StabilityContext& ctx)
{
    cfg.validate();
    StabilityReport report;
    report.kind = "pairs";
    report.A1 = cfg.A1 > 0.0 ? cfg.A1 : default_A1(ctx, cfg.q, cfg.seed, cfg.pilot_samples);

    // Pilot: A1 must be reachable with ||v|| <= A2.
    {
        double best = 0.0;
        for (int i = 0; i < cfg.pilot_samples; ++i) {
            Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(i), kPilotStream);
            const FaultParams m = uniform_in(ctx.box, rng);
            const SvdSubspace sub = svd_subspace(assemble(m, *ctx.continuous), cfg.q);
            best = std::max(best, sub.singular_values[0] * cfg.A2);
        }
        if (best < report.A1) {
            throw ConfigError("unsatisfiable constraints: largest pilot data norm " + fmt(best) +
                              " with ||v|| <= A2 is below A1 = " + fmt(report.A1));
        }
    }

    report.trials.resize(cfg.trials);
    std::vector<double> sigma_q(cfg.trials, std::numeric_limits<double>::infinity());
    std::vector<double> gaps(cfg.trials, std::numeric_limits<double>::infinity());
    parallel_for(static_cast<std::size_t>(cfg.trials), cfg.threads, [&](std::size_t i) {
        TrialRecord& rec = report.trials[i];
        rec.index = static_cast<int>(i);
        Rng rng = make_stream(cfg.seed, i, kTrialStream);
        rec.m = uniform_in(ctx.box, rng);
        if (!draw_partner(rec.m, ctx.box, cfg.pair_separation_min, rng, rec.m_prime) ||
            distance(rec.m, rec.m_prime) < cfg.pair_separation_min) {
            rec.skipped = true;
            rec.skip_reason = "separation";
            return;
        }
        rec.separation = distance(rec.m, rec.m_prime);

        const OperatorMatrix Ac_prime = assemble(rec.m_prime, *ctx.continuous);
        const SvdSubspace sub_prime = svd_subspace(Ac_prime, cfg.q);
        const double radius = cfg.A2 * uniform(rng, 0.0, 1.0);
        rec.v = sub_prime.basis() * (radius * random_unit(cfg.q, rng));
        const Eigen::VectorXd target_c = Ac_prime.apply(rec.v);
        rec.target_norm = target_c.norm();
        if (rec.target_norm < report.A1) {
            rec.skipped = true;
            rec.skip_reason = "constraint";
            return;
        }
        const Eigen::VectorXd target_d = assemble(rec.m_prime, *ctx.discrete).apply(rec.v);

        const OperatorMatrix Ac = assemble(rec.m, *ctx.continuous);
        const SvdSubspace sub = svd_subspace(Ac, cfg.q);
        evaluate_ratio(rec, ctx, Ac, sub, target_c, target_d);
        sigma_q[i] = std::min(sub.sigma_q(), sub_prime.sigma_q());
        gaps[i] = std::min(sub.relative_gap, sub_prime.relative_gap);
    });

    summarize(report, cfg);
    report.beta_min = *std::min_element(sigma_q.begin(), sigma_q.end());
    report.min_relative_gap = *std::min_element(gaps.begin(), gaps.end());
    common_metadata(report, cfg, ctx);
    return report;
}

StabilityReport fixed_target_lipschitz(const FaultParams& m0, const Eigen::VectorXd& v0, const StabilityConfig& cfg,
                                       const StabilityContext& ctx)
{
    cfg.validate();
    if (v0.size() != ctx.continuous->cols())
        throw InvalidArgument("fixed_target_lipschitz: v0 must have " + std::to_string(ctx.continuous->cols()) +
                              " coefficients");
    if (v0.norm() == 0.0) throw InvalidArgument("fixed_target_lipschitz: v0 must be nonzero");

    StabilityReport report;
    report.kind = "fixed_target";
    report.A1 = cfg.A1;
    const Eigen::VectorXd target_c = assemble(m0, *ctx.continuous).apply(v0);
    const Eigen::VectorXd target_d = assemble(m0, *ctx.discrete).apply(v0);

    report.trials.resize(cfg.trials);
    std::vector<double> sigma_q(cfg.trials, std::numeric_limits<double>::infinity());
    std::vector<double> gaps(cfg.trials, std::numeric_limits<double>::infinity());
    parallel_for(static_cast<std::size_t>(cfg.trials), cfg.threads, [&](std::size_t i) {
        TrialRecord& rec = report.trials[i];
        rec.index = static_cast<int>(i);
        rec.m_prime = m0;
        rec.v = v0;
        rec.target_norm = target_c.norm();
        Rng rng = make_stream(cfg.seed, i, kTrialStream);
        if (!draw_partner(m0, ctx.box, cfg.pair_separation_min, rng, rec.m) ||
            distance(rec.m, m0) < cfg.pair_separation_min) {
            rec.skipped = true;
            rec.skip_reason = "separation";
            return;
        }
        rec.separation = distance(rec.m, m0);
        const OperatorMatrix Ac = assemble(rec.m, *ctx.continuous);
        const SvdSubspace sub = svd_subspace(Ac, cfg.q);
        evaluate_ratio(rec, ctx, Ac, sub, target_c, target_d);
        sigma_q[i] = sub.sigma_q();
        gaps[i] = sub.relative_gap;
    });

    summarize(report, cfg);
    report.beta_min = *std::min_element(sigma_q.begin(), sigma_q.end());
    report.min_relative_gap = *std::min_element(gaps.begin(), gaps.end());
    common_metadata(report, cfg, ctx);
    report.metadata.push_back({"m0", fmt(m0)});
    report.metadata.push_back({"v0_norm", fmt(v0.norm())});
    return report;
}

void StabilityReport::write_summary(std::ostream& out) const
{
    out << "kind = " << kind << '\n';
    out << "c_hat = " << fmt(c_hat) << '\n';
    out << "c_hat_discrete = " << fmt(c_hat_discrete) << '\n';
    out << "min_discrete_over_continuous = " << fmt(min_discrete_over_continuous) << '\n';
    out << "half_factor_violations = " << half_factor_violations << '\n';
    out << "completed = " << completed << '\n';
    out << "skipped_constraint = " << skipped_constraint << '\n';
    out << "skipped_separation = " << skipped_separation << '\n';
    out << "beta_min = " << fmt(beta_min) << '\n';
    out << "min_relative_gap = " << fmt(min_relative_gap) << '\n';
    out << "argmin.index = " << argmin.index << '\n';
    out << "argmin.m = " << fmt(argmin.m) << '\n';
    out << "argmin.m_prime = " << fmt(argmin.m_prime) << '\n';
    out << "argmin.separation = " << fmt(argmin.separation) << '\n';
    out << "argmin.u = " << fmt(argmin.u) << '\n';
    out << "argmin.v = " << fmt(argmin.v) << '\n';
    out << "histogram.log10_lo = " << fmt(histogram.log10_lo) << '\n';
    out << "histogram.log10_hi = " << fmt(histogram.log10_hi) << '\n';
    out << "histogram.counts =";
    for (int c : histogram.counts) out << ' ' << c;
    out << '\n';
    for (const auto& [key, value] : metadata) out << "meta." << key << " = " << value << '\n';
}

void StabilityReport::write_trials_csv(std::ostream& out) const
{
    out << "index,skipped,reason,a,b,d,a_prime,b_prime,d_prime,separation,target_norm,ratio,ratio_discrete\n";
    for (const auto& t : trials) {
        out << t.index << ',' << (t.skipped ? 1 : 0) << ',' << t.skip_reason << ',' << fmt(t.m.a) << ','
            << fmt(t.m.b) << ',' << fmt(t.m.d) << ',' << fmt(t.m_prime.a) << ',' << fmt(t.m_prime.b) << ','
            << fmt(t.m_prime.d) << ',' << fmt(t.separation) << ',' << fmt(t.target_norm) << ',' << fmt(t.ratio)
            << ',' << fmt(t.ratio_discrete) << '\n';
    }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size()) throw InvalidArgument("loglog_slope: size mismatch");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0 && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

TestFunction constant_test_function(double value, double half_width)
{
    const double side = 2.0 * half_width;
    return {"constant",
            [value](const std::vector<Point2>& pts) { return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(pts.size()), value); },
            value * side * side};
}

TestFunction cosine_test_function(double s, double half_width)
{
    const double one_axis = 2.0 * s * std::sin(half_width / s);
    return {"cosine",
            [s](const std::vector<Point2>& pts) {
                Eigen::VectorXd v(static_cast<Eigen::Index>(pts.size()));
                for (std::size_t j = 0; j < pts.size(); ++j)
                    v[static_cast<Eigen::Index>(j)] = std::cos(pts[j][0] / s) * std::cos(pts[j][1] / s);
                return v;
            },
            one_axis * one_axis};
}

TestFunction forward_data_test_function(const FaultParams& m, const Eigen::VectorXd& coeffs,
                                        const OperatorSetup& setup, int oracle_cells, int oracle_order)
{
    const ObservationGrid dense = gauss_observation_grid(oracle_cells, oracle_order, setup.grid().half_width);
    const Eigen::VectorXd values = data_at(m, coeffs, setup, dense.points);
    double exact = 0.0;
    for (std::size_t j = 0; j < dense.size(); ++j) exact += dense.weights[j] * values[static_cast<Eigen::Index>(j)];
    auto shared = std::make_shared<const OperatorSetup>(setup);
    return {"forward_data",
            [shared, m, coeffs](const std::vector<Point2>& pts) { return data_at(m, coeffs, *shared, pts); }, exact};
}

std::vector<TestFunction> default_test_functions(std::uint64_t seed, const OperatorSetup& setup)
{
    Rng rng = make_stream(seed, 0, 0x71756164ULL);
    const FaultParams m{uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05), uniform(rng, -60.0, -40.0)};
    const SvdSubspace sub = svd_subspace(assemble(m, setup), 5);
    Eigen::VectorXd w(5);
    for (int i = 0; i < 5; ++i) w[i] = standard_normal(rng);
    const double L = setup.grid().half_width;
    return {constant_test_function(1.0, L), cosine_test_function(50.0, L),
            forward_data_test_function(m, sub.basis() * w, setup)};
}

QuadratureCheck quadrature_order_check(const std::vector<TestFunction>& functions, const std::vector<int>& n_list,
                                       double half_width)
{
    if (n_list.size() < 3) throw InvalidArgument("quadrature_order_check: need at least 3 grid sizes");
    QuadratureCheck check;
    for (const auto& fn : functions) {
        QuadratureCheck::Series series;
        series.name = fn.name;
        bool all_exact = true;
        for (int n : n_list) {
            const ObservationGrid grid = observation_grid(n, half_width);
            const Eigen::VectorXd values = fn.eval(grid.points);
            double sum = 0.0;
            double scale = 0.0;
            for (std::size_t j = 0; j < grid.size(); ++j) {
                sum += grid.weights[j] * values[static_cast<Eigen::Index>(j)];
                scale += std::abs(grid.weights[j] * values[static_cast<Eigen::Index>(j)]);
            }
            const double err = std::abs(sum - fn.exact);
            // Rounding floor of the weighted sum.
            const bool exact = err <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(scale, std::abs(fn.exact));
            all_exact = all_exact && exact;
            series.n.push_back(n);
            series.M.push_back(static_cast<int>(grid.size()));
            series.error.push_back(exact ? 0.0 : err);
        }
        series.exact = all_exact;
        std::vector<double> M(series.M.begin(), series.M.end());
        series.slope = loglog_slope(M, series.error);
        check.series.push_back(std::move(series));
    }
    return check;
}

double projection_distance(const SvdSubspace& s1, const SvdSubspace& s2)
{
    const Eigen::MatrixXd diff = projector(s1) - projector(s2);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(diff, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

int gapped_rank(const SvdSubspace& sub, int max_q, double min_gap)
{
    const auto& s = sub.singular_values;
    for (int r = std::min<int>(max_q, static_cast<int>(s.size()) - 1); r >= 1; --r) {
        if (s[r - 1] > 0.0 && (s[r - 1] - s[r]) / s[r - 1] >= min_gap) return r;
    }
    return 0;
}

namespace {

[[noreturn]] void gap_violation(const SvdSubspace& sub, const FaultParams& m, double min_gap)
{
    std::ostringstream msg;
    msg << "spectral gap at rank q = " << sub.q << " is " << sub.relative_gap << " (< " << min_gap
        << ") at m = (" << m.a << ", " << m.b << ", " << m.d << "): sigma_q = " << fmt(sub.sigma_q())
        << ", sigma_q+1 = " << fmt(sub.sigma_next());
    throw PreconditionError(msg.str());
}

}  // namespace

ProjectionCheck projection_lipschitz_check(const FaultParams& m0, double radius, int trials, int q,
                                           const OperatorSetup& setup, std::uint64_t seed, double min_gap)
{
    if (!(radius > 0.0)) throw InvalidArgument("projection_lipschitz_check: radius must be positive");
    if (trials < 1) throw InvalidArgument("projection_lipschitz_check: trials must be >= 1");
    const SvdSubspace sub0 = svd_subspace(assemble(m0, setup), q);
    if (sub0.relative_gap < min_gap) gap_violation(sub0, m0, min_gap);

    ProjectionCheck check;
    check.gap_at_m0 = sub0.relative_gap;
    for (int i = 0; i < trials; ++i) {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(i), kProjectionStream);
        const double rho = radius * std::cbrt(uniform(rng, 0.0, 1.0));
        const FaultParams m = FaultParams::from(m0.vec() + rho * unit_direction(rng));
        const double sep = distance(m, m0);
        if (sep == 0.0) continue;
        const SvdSubspace sub = svd_subspace(assemble(m, setup), q);
        if (sub.relative_gap < 0.5 * sub0.relative_gap) gap_violation(sub, m, 0.5 * sub0.relative_gap);
        check.ratios.push_back(projection_distance(sub, sub0) / sep);
    }
    if (check.ratios.empty()) throw ReportError("projection_lipschitz_check: no usable samples");
    check.max_ratio = *std::max_element(check.ratios.begin(), check.ratios.end());
    check.median_ratio = median(check.ratios);
    return check;
}

LocalConstant local_constant(const FaultParams& m, const Eigen::Vector3d& q_dir, int q, double A1, double A2,
                             const OperatorSetup& setup, double min_gap, double fd_step)
{
    if (std::abs(q_dir.norm() - 1.0) > 1e-12) throw InvalidArgument("local_constant: q_dir must be a unit vector");
    if (!(A1 >= 0.0) || !(A2 > 0.0)) throw InvalidArgument("local_constant: need A1 >= 0 and A2 > 0");

    LocalConstant out;
    const OperatorMatrix A = assemble(m, setup);
    out.subspace = svd_subspace(A, q);
    const SvdSubspace& sub = out.subspace;
    if (sub.relative_gap < min_gap) gap_violation(sub, m, min_gap);

    const SvdSubspace plus = svd_subspace(assemble(FaultParams::from(m.vec() + fd_step * q_dir), setup), q);
    const SvdSubspace minus = svd_subspace(assemble(FaultParams::from(m.vec() - fd_step * q_dir), setup), q);
    const Eigen::MatrixXd dP = (projector(plus) - projector(minus)) / (2.0 * fd_step);

    const Eigen::MatrixXd U = sub.basis();
    const OperatorMatrix dA = directional_derivative(m, q_dir, setup);
    const Eigen::MatrixXd G = dA.weighted * U + A.weighted * (dP * U);

    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.weighted * U);
    out.range_basis = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), q);
    out.residual = G - out.range_basis * (out.range_basis.transpose() * G);

    // min c^T M c over unit c with c^T S c >= kappa^2, where S = diag(sigma_i^2)
    // so that c^T S c = ||A_m U c||^2.
    const Eigen::MatrixXd M = out.residual.transpose() * out.residual;
    const Eigen::VectorXd S = sub.singular_values.head(q).array().square();
    const double kappa2 = (A1 / A2) * (A1 / A2);
    if (S.maxCoeff() < kappa2) throw PreconditionError("local_constant: admissible cone is empty (sigma_1 < A1/A2)");

    const auto smallest = [&](double mu) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M - mu * Eigen::MatrixXd(S.asDiagonal()));
        return Eigen::VectorXd(eig.eigenvectors().col(0));
    };
    const auto cone = [&](const Eigen::VectorXd& c) { return c.dot(S.asDiagonal() * c); };

    Eigen::VectorXd c = smallest(0.0);
    if (cone(c) < kappa2) {
        // The constraint is active: increase the multiplier until the
        // minimizer of M - mu S reaches the cone boundary.
        double lo = 0.0;
        double hi = 1.0;
        const double scale = M.norm() / std::max(S.maxCoeff(), std::numeric_limits<double>::min());
        hi = std::max(hi, scale);
        while (cone(smallest(hi)) < kappa2) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (cone(smallest(mid)) < kappa2 ? lo : hi) = mid;
        }
        c = smallest(hi);
    }
    out.minimizer = c;
    out.value = std::sqrt(std::max(0.0, c.dot(M * c)));
    return out;
}

}  // namespace stabinv

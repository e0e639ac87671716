#include "stabinv/inversion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "stabinv/errors.hpp"
#include "stabinv/random.hpp"

namespace stabinv {

namespace {

double scan_distance(const Eigen::MatrixXd& F, Eigen::Index row, const Eigen::VectorXd& x)
{
    double d = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double t = F(row, j) - x[j];
        d += t * t;
    }
    return d;
}

void check_query(const SampleBank& bank, const Eigen::VectorXd& x)
{
    if (bank.size() == 0) throw InvalidArgument("nearest-neighbor search on an empty bank");
    if (x.size() != bank.features.cols())
        throw InvalidArgument("query has " + std::to_string(x.size()) + " features, bank rows have " +
                              std::to_string(bank.features.cols()));
}

}  // namespace

SampleBank SampleBank::from_dataset(const Dataset& data, std::string label)
{
    return {std::move(label), data.features, data.targets};
}

SampleBank SampleBank::subset(int count, std::uint64_t seed, std::string label) const
{
    if (count < 1 || count > size()) throw InvalidArgument("subset size must lie in [1, bank size]");
    std::vector<int> idx(static_cast<std::size_t>(size()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_stream(seed, 0, 0x73756273ULL);
    // Partial Fisher-Yates with an explicit draw so results do not depend on
    // the standard library's shuffle.
    for (int i = 0; i < count; ++i) {
        const auto span = static_cast<std::uint64_t>(size() - i);
        const int j = i + static_cast<int>(rng() % span);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(count));
    std::sort(idx.begin(), idx.end());
    SampleBank out;
    out.label = std::move(label);
    out.features.resize(count, features.cols());
    out.targets.resize(count, targets.cols());
    for (int i = 0; i < count; ++i) {
        out.features.row(i) = features.row(idx[static_cast<std::size_t>(i)]);
        out.targets.row(i) = targets.row(idx[static_cast<std::size_t>(i)]);
    }
    return out;
}

int nn_search_scan(const SampleBank& bank, const Eigen::VectorXd& x)
{
    check_query(bank, x);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < bank.features.rows(); ++i) {
        const double d = scan_distance(bank.features, i, x);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

Eigen::VectorXd nn_search(const SampleBank& bank, const Eigen::VectorXd& x)
{
    return bank.targets.row(nn_search_scan(bank, x)).transpose();
}

NnIndex::NnIndex(const SampleBank& bank) : bank_(&bank), sq_norms_(bank.features.rowwise().squaredNorm())
{
    if (bank.size() == 0) throw InvalidArgument("nearest-neighbor index on an empty bank");
}

int NnIndex::nearest(const Eigen::VectorXd& x) const
{
    return nearest_batch(x.transpose())[0];
}

std::vector<int> NnIndex::nearest_batch(const Eigen::MatrixXd& queries) const
{
    const Eigen::MatrixXd& F = bank_->features;
    if (queries.cols() != F.cols())
        throw InvalidArgument("queries have " + std::to_string(queries.cols()) + " features, bank rows have " +
                              std::to_string(F.cols()));
    const Eigen::MatrixXd dots = F * queries.transpose();  // bank x queries
    const double row_max = std::sqrt(sq_norms_.maxCoeff());
    const double eps = std::numeric_limits<double>::epsilon();
    std::vector<int> out(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index qi = 0; qi < queries.rows(); ++qi) {
        const Eigen::VectorXd x = queries.row(qi).transpose();
        const double xx = x.squaredNorm();
        const Eigen::VectorXd approx = (sq_norms_.array() + xx - 2.0 * dots.col(qi).array()).matrix();
        // Rounding bound on approx vs the scan distance, both O(M eps).
        const double slack =
            8.0 * static_cast<double>(F.cols() + 4) * eps * (row_max + std::sqrt(xx)) * (row_max + std::sqrt(xx));
        const double cut = approx.minCoeff() + 2.0 * slack;
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < approx.size(); ++i) {
            if (approx[i] > cut) continue;
            const double d = scan_distance(F, i, x);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        out[static_cast<std::size_t>(qi)] = best;
    }
    return out;
}

Eigen::MatrixXd MlpInverter::invert(const Eigen::MatrixXd& features) const
{
    return predict(model_, features, threads_).targets;
}

NnInverter::NnInverter(SampleBank bank, bool accelerated) : bank_(std::move(bank)), accelerated_(accelerated)
{
    if (bank_.size() == 0) throw InvalidArgument("nearest-neighbor inverter on an empty bank");
}

Eigen::MatrixXd NnInverter::invert(const Eigen::MatrixXd& features) const
{
    Eigen::MatrixXd out(features.rows(), bank_.targets.cols());
    if (accelerated_) {
        const NnIndex index(bank_);
        const auto rows = index.nearest_batch(features);
        for (Eigen::Index i = 0; i < features.rows(); ++i) out.row(i) = bank_.targets.row(rows[static_cast<std::size_t>(i)]);
        return out;
    }
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        out.row(i) = bank_.targets.row(nn_search_scan(bank_, features.row(i).transpose()));
    return out;
}

Eigen::MatrixXd FixedInverter::invert(const Eigen::MatrixXd& features) const
{
    if (features.rows() != answers_.rows()) throw InvalidArgument("fixed inverter: row count mismatch");
    return answers_;
}

EvalResult evaluate(const Inverter& method, const Dataset& test)
{
    if (test.size() == 0) throw InvalidArgument("evaluate: empty test set");
    EvalResult result;
    result.method = method.name();
    const auto t0 = std::chrono::steady_clock::now();
    result.predictions = method.invert(test.features);
    result.run_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (result.predictions.rows() != test.size() || result.predictions.cols() != 3)
        throw InvalidArgument("evaluate: method returned a " + std::to_string(result.predictions.rows()) + "x" +
                              std::to_string(result.predictions.cols()) + " matrix");
    result.truth = test.targets;
    result.mean_abs_error = (result.predictions - result.truth).cwiseAbs().colwise().mean().transpose();
    return result;
}

void write_eval_csv(const EvalResult& result, std::ostream& out)
{
    const auto old_precision = out.precision(17);
    out << "index,a_true,b_true,d_true,a_pred,b_pred,d_pred,a_err,b_err,d_err\n";
    for (Eigen::Index i = 0; i < result.truth.rows(); ++i) {
        out << i;
        for (int k = 0; k < 3; ++k) out << ',' << result.truth(i, k);
        for (int k = 0; k < 3; ++k) out << ',' << result.predictions(i, k);
        for (int k = 0; k < 3; ++k) out << ',' << std::abs(result.predictions(i, k) - result.truth(i, k));
        out << '\n';
    }
    out.precision(old_precision);
}

LipschitzSample predict_lipschitz(const MlpModel& model, const Eigen::MatrixXd& features, int pairs,
                                  std::uint64_t seed)
{
    if (features.rows() < 2) throw InvalidArgument("predict_lipschitz: need at least two rows");
    if (pairs < 1) throw InvalidArgument("predict_lipschitz: pairs must be >= 1");
    LipschitzSample out;
    Rng rng = make_stream(seed, 0, 0x6c697073ULL);
    const auto rows = static_cast<std::uint64_t>(features.rows());
    while (static_cast<int>(out.ratios.size()) < pairs) {
        const auto i = static_cast<Eigen::Index>(rng() % rows);
        const auto j = static_cast<Eigen::Index>(rng() % rows);
        const double df = (features.row(i) - features.row(j)).norm();
        if (df == 0.0) continue;
        const Eigen::VectorXd pi = model.forward(features.row(i).transpose()).cwiseMax(0.0).cwiseMin(1.0);
        const Eigen::VectorXd pj = model.forward(features.row(j).transpose()).cwiseMax(0.0).cwiseMin(1.0);
        out.ratios.push_back((pi - pj).norm() / df);
    }
    std::vector<double> sorted = out.ratios;
    std::sort(sorted.begin(), sorted.end());
    out.max_ratio = sorted.back();
    const std::size_t n = sorted.size();
    out.median_ratio = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    return out;
}

}  // namespace stabinv

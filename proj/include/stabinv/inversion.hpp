#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabinv/dataset.hpp"
#include "stabinv/mlp.hpp"

namespace stabinv {

// Reference samples for nearest-neighbor inversion.
struct SampleBank {
    std::string label;
    Eigen::MatrixXd features;  // rows unit norm
    Eigen::MatrixXd targets;

    [[nodiscard]] int size() const { return static_cast<int>(features.rows()); }
    static SampleBank from_dataset(const Dataset& data, std::string label);
    // `count` rows drawn without replacement, kept in increasing row order.
    [[nodiscard]] SampleBank subset(int count, std::uint64_t seed, std::string label) const;
};

/// Row of `bank` closest to `x` in Euclidean distance; ties go to the lowest
/// row index. Plain linear scan.
int nn_search_scan(const SampleBank& bank, const Eigen::VectorXd& x);

// Batched search: distances are screened through one matrix product and the
// near-best candidates are re-ranked with the exact scan arithmetic, so the
// answer is identical to nn_search_scan.
class NnIndex {
public:
    explicit NnIndex(const SampleBank& bank);

    [[nodiscard]] int nearest(const Eigen::VectorXd& x) const;
    [[nodiscard]] std::vector<int> nearest_batch(const Eigen::MatrixXd& queries) const;
    [[nodiscard]] const SampleBank& bank() const { return *bank_; }

private:
    const SampleBank* bank_;
    Eigen::VectorXd sq_norms_;
};

/// Target of the nearest bank row.
Eigen::VectorXd nn_search(const SampleBank& bank, const Eigen::VectorXd& x);

// Maps normalized feature rows to normalized parameter estimates in [0,1]^3.
class Inverter {
public:
    virtual ~Inverter() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual Eigen::MatrixXd invert(const Eigen::MatrixXd& features) const = 0;
};

class MlpInverter : public Inverter {
public:
    MlpInverter(MlpModel model, unsigned threads = 1) : model_(std::move(model)), threads_(threads) {}
    [[nodiscard]] std::string name() const override { return "mlp"; }
    [[nodiscard]] Eigen::MatrixXd invert(const Eigen::MatrixXd& features) const override;

private:
    MlpModel model_;
    unsigned threads_;
};

class NnInverter : public Inverter {
public:
    // accelerated = false uses the plain linear scan per query.
    NnInverter(SampleBank bank, bool accelerated = false);
    [[nodiscard]] std::string name() const override { return "nn_" + bank_.label; }
    [[nodiscard]] Eigen::MatrixXd invert(const Eigen::MatrixXd& features) const override;

private:
    SampleBank bank_;
    bool accelerated_;
};

// Returns fixed answers row by row; used to check the evaluation plumbing.
class FixedInverter : public Inverter {
public:
    FixedInverter(std::string name, Eigen::MatrixXd answers) : name_(std::move(name)), answers_(std::move(answers)) {}
    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] Eigen::MatrixXd invert(const Eigen::MatrixXd& features) const override;

private:
    std::string name_;
    Eigen::MatrixXd answers_;
};

struct EvalResult {
    std::string method;
    Eigen::Vector3d mean_abs_error = Eigen::Vector3d::Zero();  // normalized a, b, d
    double load_seconds = 0.0;
    double run_seconds = 0.0;
    Eigen::MatrixXd predictions;
    Eigen::MatrixXd truth;

    [[nodiscard]] double mean_error() const { return mean_abs_error.mean(); }
};

/// Runs `method` on every row of `test` and times the batch.
EvalResult evaluate(const Inverter& method, const Dataset& test);

/// Per-case CSV: index,a_true,b_true,d_true,a_pred,b_pred,d_pred,a_err,b_err,d_err.
void write_eval_csv(const EvalResult& result, std::ostream& out);

struct LipschitzSample {
    std::vector<double> ratios;
    double max_ratio = 0.0;
    double median_ratio = 0.0;
};

/// |predict(f1) - predict(f2)| / |f1 - f2| over random pairs of rows of `features`.
LipschitzSample predict_lipschitz(const MlpModel& model, const Eigen::MatrixXd& features, int pairs,
                                  std::uint64_t seed);

}  // namespace stabinv

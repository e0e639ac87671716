#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabinv/geometry.hpp"

namespace stabinv {

inline constexpr int kModelFormatVersion = 1;

// Fully connected network: tanh on hidden layers, identity on the output.
// Layer l maps dims[l] -> dims[l+1] by x -> W[l] x + b[l].
struct MlpModel {
    std::vector<int> dims;
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;

    // Training metadata.
    double gamma = 0.2;
    int iterations = 0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    std::vector<double> loss_trace;
    ParamBox box;  // maps outputs in [0,1]^3 back to (a, b, d)

    [[nodiscard]] int layers() const { return static_cast<int>(W.size()); }
    [[nodiscard]] int input_dim() const { return dims.front(); }
    [[nodiscard]] int output_dim() const { return dims.back(); }
    [[nodiscard]] int weight_count() const;     // entries of all W
    [[nodiscard]] int parameter_count() const;  // weights and biases

    // Flat parameter vector: for each layer W (row-major) then b.
    [[nodiscard]] Eigen::VectorXd pack() const;
    void unpack(const Eigen::VectorXd& params);

    // Raw (unclamped) outputs for a single input.
    [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
};

/// Xavier-uniform weights U(-s, s), s = sqrt(6 / (fan_in + fan_out)), zero biases.
MlpModel init_mlp(const std::vector<int>& dims, std::uint64_t seed);

/// J = gamma * mean(W^2) + (1 - gamma) * MSE over all N x out entries.
/// Biases are not penalized. Writes dJ/dparams (pack() layout) into `grad`
/// when non-null.
double mlp_objective(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double gamma,
                     Eigen::VectorXd* grad);

struct TrainOptions {
    std::vector<int> hidden{64, 32, 16};
    double gamma = 0.2;
    int max_iters = 2000;
    std::uint64_t seed = 1;
    double sigma0 = 1e-4;
    double lambda0 = 1e-6;
    double grad_tol = 1e-12;  // stop when |dJ| falls below this
};

struct TrainStats {
    int iterations = 0;
    int accepted = 0;
    int rejected = 0;
    int restarts = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Minimizes mlp_objective by Moller's scaled conjugate gradient. The loss
/// trace records J at the current weights after every iteration; it never
/// increases because rejected steps leave the weights unchanged.
MlpModel train_mlp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const TrainOptions& opts,
                   const ParamBox& box = {}, TrainStats* stats = nullptr);

/// SCG on an already initialized model (dims taken from it).
TrainStats scg_minimize(MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double gamma,
                        int max_iters, double sigma0 = 1e-4, double lambda0 = 1e-6, double grad_tol = 1e-12);

struct Prediction {
    Eigen::MatrixXd targets;  // rows in [0,1]^3
    int renormalized = 0;     // inputs whose norm differed from 1 by more than 1e-9
};

/// Forward pass per row, clamped to [0,1]^3. Rows that are not unit norm are
/// renormalized first and counted.
Prediction predict(const MlpModel& model, const Eigen::MatrixXd& features, unsigned threads = 1);

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace stabinv

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabinv/geometry.hpp"
#include "stabinv/kernel.hpp"
#include "stabinv/operator.hpp"

namespace stabinv {

inline constexpr int kDatasetFormatVersion = 1;

// Everything needed to regenerate a dataset exactly.
struct DatasetMeta {
    int format_version = kDatasetFormatVersion;
    std::uint64_t seed = 1;
    int count = 0;
    int first_index = 0;  // samples use RNG streams first_index .. first_index + count - 1
    int q = 5;
    int grid_n = 11;
    double grid_half_width = 200.0;
    int modes_per_axis = 8;
    SourceRegion region;
    KernelConfig kernel;
    ParamBox box;
    double noise_level = 0.0;

    [[nodiscard]] int feature_dim() const { return grid_n * grid_n; }
};

// Row i holds one sample: unit-norm features and the target m rescaled to
// [0,1]^3 by the box bounds.
struct Dataset {
    DatasetMeta meta;
    Eigen::MatrixXd features;  // count x M
    Eigen::MatrixXd targets;   // count x 3
    std::vector<FaultParams> raw_m;

    [[nodiscard]] int size() const { return static_cast<int>(features.rows()); }
    [[nodiscard]] int feature_dim() const { return static_cast<int>(features.cols()); }
    // Rows [begin, end) as a new dataset.
    [[nodiscard]] Dataset slice(int begin, int end) const;
};

struct GenerateOptions {
    int count = 1;
    int q = 5;
    std::uint64_t seed = 1;
    int first_index = 0;
    double noise_level = 0.0;
    unsigned threads = 1;
    // Test hook: when set, replaces the N(0, I_q) slip weights of sample i.
    std::function<Eigen::VectorXd(int index)> forced_weights;
};

// Discretization shared by all samples of a dataset.
struct GenerationContext {
    std::shared_ptr<const OperatorSetup> setup;
    ParamBox box;
};

GenerationContext make_generation_context(int grid_n, int modes_per_axis, const SourceRegion& region,
                                          const KernelConfig& kernel, const ParamBox& box);

/// Draws m uniform in B and w ~ N(0, I_q); the features are the normalized
/// point values of A_m (sum_i w_i u_i) at the grid, u_i the top-q right
/// singular vectors at m. With noise_level > 0, Gaussian noise of standard
/// deviation noise_level x sup-norm is added before normalizing.
Dataset generate(const GenerateOptions& opts, const GenerationContext& ctx);

/// Adds N(0, (level * sup|data|)^2 I) and renormalizes to unit Euclidean norm.
/// level = 0 returns the input unchanged.
Eigen::VectorXd add_noise(const Eigen::VectorXd& data, double level, std::uint64_t seed);

/// Saves the CSV body (header a,b,d,f_1..f_M; raw m) to `path` and the
/// metadata to `path` + ".meta.json". A ".gz" suffix compresses the body.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::filesystem::path metadata_path(const std::filesystem::path& path);

}  // namespace stabinv

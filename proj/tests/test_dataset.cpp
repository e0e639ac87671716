#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stabinv/dataset.hpp"
#include "stabinv/errors.hpp"

using namespace stabinv;

namespace {

GenerationContext tiny_context(int grid_n = 5, int K = 3)
{
    return make_generation_context(grid_n, K, SourceRegion{}, KernelConfig{}, ParamBox{});
}

GenerateOptions options(int count, std::uint64_t seed, int q = 2)
{
    GenerateOptions o;
    o.count = count;
    o.seed = seed;
    o.q = q;
    o.threads = 4;
    return o;
}

class DatasetFiles : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir = std::filesystem::temp_directory_path() /
              ("stabinv_ds_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
    }
    void TearDown() override { std::filesystem::remove_all(dir); }
    std::filesystem::path dir;
};

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Generate, DeterministicAndThreadIndependent)
{
    const auto ctx = tiny_context();
    GenerateOptions o = options(20, 7);
    const Dataset a = generate(o, ctx);
    o.threads = 1;
    const Dataset b = generate(o, ctx);
    EXPECT_TRUE(a.features == b.features);
    EXPECT_TRUE(a.targets == b.targets);
    o.seed = 8;
    const Dataset c = generate(o, ctx);
    EXPECT_FALSE(a.targets == c.targets);
}

TEST(Generate, RowsAreUnitNormAndTargetsInUnitCube)
{
    const auto ctx = tiny_context();
    const Dataset d = generate(options(50, 3), ctx);
    ASSERT_EQ(d.size(), 50);
    ASSERT_EQ(d.feature_dim(), 25);
    for (int i = 0; i < d.size(); ++i) {
        EXPECT_NEAR(d.features.row(i).norm(), 1.0, 1e-12);
        for (int k = 0; k < 3; ++k) {
            EXPECT_GE(d.targets(i, k), 0.0);
            EXPECT_LE(d.targets(i, k), 1.0);
        }
        EXPECT_TRUE(ParamBox{}.contains(d.raw_m[static_cast<std::size_t>(i)]));
        EXPECT_LT((ParamBox{}.to_unit(d.raw_m[static_cast<std::size_t>(i)]) - d.targets.row(i).transpose()).norm(),
                  1e-15);
    }
}

TEST(Generate, FirstIndexSelectsStreams)
{
    const auto ctx = tiny_context();
    const Dataset whole = generate(options(10, 4), ctx);
    GenerateOptions o = options(4, 4);
    o.first_index = 6;
    const Dataset tail = generate(o, ctx);
    EXPECT_TRUE(tail.features == whole.slice(6, 10).features);
}

TEST(Generate, ForcedWeightsGiveFirstSingularVector)
{
    const auto ctx = tiny_context();
    GenerateOptions o = options(3, 9, 2);
    o.forced_weights = [](int) { return Eigen::Vector2d(1.0, 0.0); };
    const Dataset d = generate(o, ctx);
    for (int i = 0; i < 3; ++i) {
        const OperatorMatrix A = assemble(d.raw_m[static_cast<std::size_t>(i)], *ctx.setup);
        const SvdSubspace sub = svd_subspace(A, 2);
        const Eigen::VectorXd expect = forward(A, sub.right.col(0)).normalized();
        EXPECT_LT((d.features.row(i).transpose() - expect).norm(), 1e-12);
    }
}

TEST(Generate, NoiseChangesDataButKeepsUnitNorm)
{
    const auto ctx = tiny_context();
    const Dataset clean = generate(options(10, 5), ctx);
    GenerateOptions o = options(10, 5);
    o.noise_level = 0.05;
    const Dataset noisy = generate(o, ctx);
    EXPECT_TRUE(clean.targets == noisy.targets);
    for (int i = 0; i < 10; ++i) {
        EXPECT_NEAR(noisy.features.row(i).norm(), 1.0, 1e-12);
        const double diff = (noisy.features.row(i) - clean.features.row(i)).norm();
        EXPECT_GT(diff, 0.0);
        EXPECT_LT(diff, 1.0);
    }
}

TEST(AddNoise, ScaleMatchesSupNorm)
{
    // Empirical noise standard deviation on a long vector.
    const int n = 40000;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    x[0] = 100.0;
    // Before normalization the noise has std 0.1 * 100 = 10; after, the
    // vector is divided by its norm (about sqrt(1e4 + n * 100)).
    const Eigen::VectorXd y = add_noise(x, 0.1, 3);
    EXPECT_NEAR(y.norm(), 1.0, 1e-12);
    const Eigen::VectorXd tail = y.tail(n - 1);
    const double sd = std::sqrt(tail.squaredNorm() / (n - 1));
    const double expect = 10.0 / std::sqrt(1e4 + n * 100.0);
    EXPECT_NEAR(sd, expect, 0.03 * expect);
    EXPECT_TRUE(add_noise(x, 0.0, 3) == x);
    EXPECT_THROW(add_noise(x, -1.0, 3), InvalidArgument);
}

TEST(Generate, ParametersAreUniformOverBox)
{
    // Chi-square with 10 bins per coordinate, 9 degrees of freedom; 27.88 is
    // the 0.999 quantile.
    const auto ctx = make_generation_context(3, 2, SourceRegion{}, KernelConfig{}, ParamBox{});
    GenerateOptions o = options(10000, 21, 1);
    o.threads = 8;
    const Dataset d = generate(o, ctx);
    for (int k = 0; k < 3; ++k) {
        std::vector<int> counts(10, 0);
        for (int i = 0; i < d.size(); ++i) counts[std::min(9, static_cast<int>(d.targets(i, k) * 10))] += 1;
        double chi2 = 0.0;
        for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
        EXPECT_LT(chi2, 27.88) << "coordinate " << k;
    }
}

TEST(Generate, RejectsBadOptions)
{
    const auto ctx = tiny_context();
    EXPECT_THROW(generate(options(0, 1), ctx), InvalidArgument);
    EXPECT_THROW(generate(options(1, 1, 9), ctx), InvalidArgument);
    GenerateOptions o = options(1, 1);
    o.noise_level = -0.1;
    EXPECT_THROW(generate(o, ctx), InvalidArgument);
    EXPECT_THROW(make_generation_context(5, 3, SourceRegion{}, KernelConfig{}, ParamBox{{1, -1}, {-2, 2}, {-60, -10}}),
                 ConfigError);
}

TEST(Dataset, SliceKeepsRows)
{
    const Dataset d = generate(options(6, 2), tiny_context());
    const Dataset s = d.slice(2, 5);
    EXPECT_EQ(s.size(), 3);
    EXPECT_TRUE(s.features == d.features.middleRows(2, 3));
    EXPECT_EQ(s.raw_m[0], d.raw_m[2]);
    EXPECT_THROW(d.slice(4, 2), InvalidArgument);
    EXPECT_THROW(d.slice(0, 7), InvalidArgument);
}

TEST_F(DatasetFiles, SaveLoadRoundTripPlain)
{
    const Dataset d = generate(options(12, 6), tiny_context());
    const auto path = dir / "d.csv";
    save_dataset(d, path);
    const Dataset back = load_dataset(path);
    EXPECT_TRUE(back.features == d.features);
    EXPECT_TRUE(back.targets == d.targets);
    EXPECT_EQ(back.meta.seed, 6u);
    EXPECT_EQ(back.meta.q, 2);
    EXPECT_EQ(back.meta.grid_n, 5);
    EXPECT_EQ(back.meta.modes_per_axis, 3);
    const std::string body = slurp(path);
    EXPECT_EQ(body.substr(0, 12), "a,b,d,f_1,f_");
    // Saving again is byte-identical.
    save_dataset(back, dir / "e.csv");
    EXPECT_EQ(slurp(dir / "e.csv"), body);
}

TEST_F(DatasetFiles, SaveLoadRoundTripGzip)
{
    const Dataset d = generate(options(12, 6), tiny_context());
    save_dataset(d, dir / "d.csv.gz");
    save_dataset(d, dir / "d.csv");
    const Dataset back = load_dataset(dir / "d.csv.gz");
    EXPECT_TRUE(back.features == d.features);
    EXPECT_LT(std::filesystem::file_size(dir / "d.csv.gz"), std::filesystem::file_size(dir / "d.csv"));
}

TEST_F(DatasetFiles, TruncatedFileNamesLine)
{
    const Dataset d = generate(options(5, 6), tiny_context());
    const auto path = dir / "d.csv";
    save_dataset(d, path);
    std::string body = slurp(path);
    body.resize(body.rfind('\n', body.size() - 2) + 1);  // drop the last row
    std::ofstream(path, std::ios::binary | std::ios::trunc) << body;
    try {
        load_dataset(path);
        FAIL() << "expected LoadError";
    } catch (const LoadError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("d.csv:"), std::string::npos);
        EXPECT_NE(msg.find("4 of 5"), std::string::npos);
    }
}

TEST_F(DatasetFiles, ColumnMismatchIsLoadError)
{
    const Dataset d = generate(options(3, 6), tiny_context());
    const auto path = dir / "d.csv";
    save_dataset(d, path);
    std::string body = slurp(path);
    const auto second = body.find('\n') + 1;
    const auto cut = body.rfind(',', body.find('\n', second));
    body.erase(cut, body.find('\n', second) - cut);  // one column short on row 1
    std::ofstream(path, std::ios::binary | std::ios::trunc) << body;
    try {
        load_dataset(path);
        FAIL() << "expected LoadError";
    } catch (const LoadError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST_F(DatasetFiles, MissingMetadataIsLoadError)
{
    const Dataset d = generate(options(3, 6), tiny_context());
    save_dataset(d, dir / "d.csv");
    std::filesystem::remove(metadata_path(dir / "d.csv"));
    EXPECT_THROW(load_dataset(dir / "d.csv"), LoadError);
}

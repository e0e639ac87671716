#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "stabinv/errors.hpp"
#include "stabinv/mlp.hpp"
#include "stabinv/random.hpp"

using namespace stabinv;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed)
{
    Rng rng = make_stream(seed, 0);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
    return m;
}

Eigen::MatrixXd unit_rows(Eigen::MatrixXd m)
{
    m.rowwise().normalize();
    return m;
}

// Independent loss: plain loops over samples, layers and entries.
double loss_oracle(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double gamma)
{
    double sq = 0.0;
    long nw = 0;
    for (const auto& W : model.W)
        for (int i = 0; i < W.rows(); ++i)
            for (int j = 0; j < W.cols(); ++j, ++nw) sq += W(i, j) * W(i, j);
    double mse = 0.0;
    for (int n = 0; n < X.rows(); ++n) {
        std::vector<double> a(X.row(n).data(), X.row(n).data() + 0);
        a.assign(static_cast<std::size_t>(X.cols()), 0.0);
        for (int j = 0; j < X.cols(); ++j) a[static_cast<std::size_t>(j)] = X(n, j);
        for (int l = 0; l < model.layers(); ++l) {
            std::vector<double> z(static_cast<std::size_t>(model.W[l].rows()));
            for (int i = 0; i < model.W[l].rows(); ++i) {
                double s = model.b[l][i];
                for (int j = 0; j < model.W[l].cols(); ++j) s += model.W[l](i, j) * a[static_cast<std::size_t>(j)];
                z[static_cast<std::size_t>(i)] = l + 1 < model.layers() ? std::tanh(s) : s;
            }
            a = z;
        }
        for (int k = 0; k < Y.cols(); ++k) mse += std::pow(a[static_cast<std::size_t>(k)] - Y(n, k), 2);
    }
    return gamma * sq / static_cast<double>(nw) + (1 - gamma) * mse / static_cast<double>(X.rows() * Y.cols());
}

class ModelFiles : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir = std::filesystem::temp_directory_path() /
              ("stabinv_mlp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
    }
    void TearDown() override { std::filesystem::remove_all(dir); }
    std::filesystem::path dir;
};

}  // namespace

TEST(Mlp, InitShapesAndXavierRange)
{
    const MlpModel m = init_mlp({10, 6, 4, 3}, 1);
    ASSERT_EQ(m.layers(), 3);
    EXPECT_EQ(m.weight_count(), 60 + 24 + 12);
    EXPECT_EQ(m.parameter_count(), 96 + 6 + 4 + 3);
    for (int l = 0; l < 3; ++l) {
        const double s = std::sqrt(6.0 / (m.dims[l] + m.dims[l + 1]));
        EXPECT_LE(m.W[l].cwiseAbs().maxCoeff(), s);
        EXPECT_EQ(m.b[l].norm(), 0.0);
    }
    EXPECT_TRUE(init_mlp({10, 6, 4, 3}, 1).pack() == m.pack());
    EXPECT_FALSE(init_mlp({10, 6, 4, 3}, 2).pack() == m.pack());
}

TEST(Mlp, PackUnpackRoundTrip)
{
    MlpModel m = init_mlp({5, 4, 3}, 3);
    const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(m.parameter_count(), -1, 1);
    m.unpack(p);
    EXPECT_TRUE(m.pack() == p);
    // W row-major first, then b.
    EXPECT_EQ(m.W[0](0, 1), p[1]);
    EXPECT_EQ(m.b[0][0], p[20]);
    EXPECT_THROW(m.unpack(Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(Mlp, ObjectiveMatchesLoopOracle)
{
    MlpModel m = init_mlp({6, 5, 4, 3}, 4);
    Eigen::VectorXd p = m.pack();
    Rng rng = make_stream(5, 0);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.1 * standard_normal(rng);
    m.unpack(p);
    const Eigen::MatrixXd X = unit_rows(random_matrix(7, 6, 6));
    const Eigen::MatrixXd Y = random_matrix(7, 3, 7);
    for (double gamma : {0.0, 0.2, 1.0}) {
        const double ref = loss_oracle(m, X, Y, gamma);
        EXPECT_NEAR(mlp_objective(m, X, Y, gamma, nullptr), ref, 1e-14 * std::max(1.0, ref));
    }
}

TEST(Mlp, GradientMatchesFiniteDifferences)
{
    MlpModel m = init_mlp({6, 5, 4, 3}, 8);
    Eigen::VectorXd p = m.pack();
    Rng rng = make_stream(9, 0);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.1 * standard_normal(rng);
    m.unpack(p);
    const Eigen::MatrixXd X = unit_rows(random_matrix(9, 6, 10));
    const Eigen::MatrixXd Y = random_matrix(9, 3, 11);
    for (double gamma : {0.0, 0.2, 1.0}) {
        Eigen::VectorXd g;
        mlp_objective(m, X, Y, gamma, &g);
        Eigen::VectorXd fd(p.size());
        const double h = 1e-6;
        MlpModel probe = m;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            Eigen::VectorXd q = p;
            q[i] += h;
            probe.unpack(q);
            const double up = mlp_objective(probe, X, Y, gamma, nullptr);
            q[i] -= 2 * h;
            probe.unpack(q);
            fd[i] = (up - mlp_objective(probe, X, Y, gamma, nullptr)) / (2 * h);
        }
        EXPECT_LT((g - fd).norm(), 1e-6 * g.norm()) << "gamma " << gamma;
    }
}

TEST(Mlp, PurePenaltyShrinksWeights)
{
    const Eigen::MatrixXd X = unit_rows(random_matrix(10, 4, 12));
    const Eigen::MatrixXd Y = random_matrix(10, 3, 13);
    MlpModel m = init_mlp({4, 5, 3}, 14);
    double before = 0.0;
    for (const auto& W : m.W) before += W.squaredNorm();
    scg_minimize(m, X, Y, 1.0, 50);
    double after = 0.0;
    for (const auto& W : m.W) after += W.squaredNorm();
    EXPECT_LT(after, 1e-6 * before);
}

TEST(Mlp, InterpolatesSingleSample)
{
    const Eigen::MatrixXd X = unit_rows(random_matrix(1, 8, 15));
    Eigen::MatrixXd Y(1, 3);
    Y << 0.2, 0.7, 0.4;
    TrainOptions o;
    o.hidden = {6};
    o.gamma = 0.0;
    o.max_iters = 300;
    const MlpModel m = train_mlp(X, Y, o);
    EXPECT_LT((m.forward(X.row(0).transpose()) - Y.row(0).transpose()).norm(), 1e-4);
}

TEST(Mlp, LossTraceNeverIncreases)
{
    const Eigen::MatrixXd X = unit_rows(random_matrix(40, 9, 16));
    const Eigen::MatrixXd Y = (random_matrix(40, 3, 17).array() * 0.2 + 0.5).matrix();
    TrainOptions o;
    o.hidden = {8, 4};
    o.max_iters = 120;
    TrainStats stats;
    const MlpModel m = train_mlp(X, Y, o, ParamBox{}, &stats);
    ASSERT_FALSE(m.loss_trace.empty());
    for (std::size_t i = 1; i < m.loss_trace.size(); ++i) EXPECT_LE(m.loss_trace[i], m.loss_trace[i - 1]);
    EXPECT_LT(stats.final_loss, stats.initial_loss);
    EXPECT_EQ(stats.final_loss, m.final_loss);
    EXPECT_EQ(m.iterations, stats.iterations);
    EXPECT_NEAR(m.final_loss, mlp_objective(m, X, Y, o.gamma, nullptr), 1e-14);
}

TEST(Mlp, TrainingIsDeterministic)
{
    const Eigen::MatrixXd X = unit_rows(random_matrix(20, 5, 18));
    const Eigen::MatrixXd Y = random_matrix(20, 3, 19);
    TrainOptions o;
    o.hidden = {4};
    o.max_iters = 30;
    EXPECT_TRUE(train_mlp(X, Y, o).pack() == train_mlp(X, Y, o).pack());
}

TEST(Mlp, NonFiniteLossIsTrainingError)
{
    Eigen::MatrixXd X = unit_rows(random_matrix(5, 4, 20));
    Eigen::MatrixXd Y = random_matrix(5, 3, 21);
    Y(2, 1) = std::numeric_limits<double>::quiet_NaN();
    MlpModel m = init_mlp({4, 3, 3}, 1);
    try {
        scg_minimize(m, X, Y, 0.2, 10);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
    }
}

TEST(Predict, BatchEqualsSingleAndClamps)
{
    MlpModel m = init_mlp({6, 5, 3}, 22);
    Eigen::VectorXd p = m.pack();
    p.tail(3) << 5.0, -5.0, 0.5;  // output biases push two outputs out of range
    m.unpack(p);
    const Eigen::MatrixXd X = unit_rows(random_matrix(30, 6, 23));
    const Prediction batch = predict(m, X, 4);
    EXPECT_EQ(batch.renormalized, 0);
    for (int i = 0; i < 30; ++i) {
        const Prediction one = predict(m, X.row(i));
        EXPECT_TRUE(one.targets.row(0) == batch.targets.row(i));
        EXPECT_EQ(batch.targets(i, 0), 1.0);
        EXPECT_EQ(batch.targets(i, 1), 0.0);
        const double raw = m.forward(X.row(i).transpose())[2];
        EXPECT_EQ(batch.targets(i, 2), std::clamp(raw, 0.0, 1.0));
    }
}

TEST(Predict, RenormalizesAndCounts)
{
    const MlpModel m = init_mlp({6, 5, 3}, 24);
    const Eigen::MatrixXd X = unit_rows(random_matrix(4, 6, 25));
    Eigen::MatrixXd scaled = X;
    scaled.row(1) *= 3.0;
    scaled.row(3) *= 0.5;
    const Prediction p = predict(m, scaled);
    EXPECT_EQ(p.renormalized, 2);
    EXPECT_LT((p.targets - predict(m, X).targets).norm(), 1e-14);
    EXPECT_THROW(predict(m, Eigen::MatrixXd::Ones(2, 5)), InvalidArgument);
}

TEST_F(ModelFiles, SaveLoadRoundTrip)
{
    const Eigen::MatrixXd X = unit_rows(random_matrix(20, 5, 26));
    const Eigen::MatrixXd Y = random_matrix(20, 3, 27);
    TrainOptions o;
    o.hidden = {4, 3};
    o.max_iters = 10;
    o.seed = 77;
    ParamBox box;
    box.d = {-50.0, -20.0};
    const MlpModel m = train_mlp(X, Y, o, box);
    save_model(m, dir / "m.bin");
    const MlpModel back = load_model(dir / "m.bin");
    EXPECT_EQ(back.dims, m.dims);
    EXPECT_TRUE(back.pack() == m.pack());
    EXPECT_EQ(back.gamma, m.gamma);
    EXPECT_EQ(back.iterations, m.iterations);
    EXPECT_EQ(back.seed, 77u);
    EXPECT_EQ(back.final_loss, m.final_loss);
    EXPECT_EQ(back.box.d.lo, -50.0);
    EXPECT_TRUE(predict(back, X).targets == predict(m, X).targets);
}

TEST_F(ModelFiles, CorruptModelIsLoadError)
{
    const MlpModel m = init_mlp({5, 4, 3}, 1);
    save_model(m, dir / "m.bin");
    const auto size = std::filesystem::file_size(dir / "m.bin");
    std::filesystem::resize_file(dir / "m.bin", size - 16);
    EXPECT_THROW(load_model(dir / "m.bin"), LoadError);
    std::ofstream(dir / "x.bin") << "not a model\n";
    EXPECT_THROW(load_model(dir / "x.bin"), LoadError);
    EXPECT_THROW(load_model(dir / "missing.bin"), LoadError);
}

#include "stabinv/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stabinv/errors.hpp"
#include "stabinv/parallel.hpp"
#include "stabinv/random.hpp"

namespace stabinv {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_dims(const std::vector<int>& dims)
{
    if (dims.size() < 2) throw InvalidArgument("network needs at least an input and an output layer");
    for (int d : dims)
        if (d < 1) throw InvalidArgument("layer dimensions must be positive");
}

void check_data(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y)
{
    if (X.rows() != Y.rows()) throw InvalidArgument("feature and target row counts differ");
    if (X.rows() == 0) throw InvalidArgument("empty training set");
    if (X.cols() != model.input_dim())
        throw InvalidArgument("feature width " + std::to_string(X.cols()) + " does not match input layer " +
                              std::to_string(model.input_dim()));
    if (Y.cols() != model.output_dim())
        throw InvalidArgument("target width " + std::to_string(Y.cols()) + " does not match output layer " +
                              std::to_string(model.output_dim()));
}

}  // namespace

int MlpModel::weight_count() const
{
    int n = 0;
    for (const auto& w : W) n += static_cast<int>(w.size());
    return n;
}

int MlpModel::parameter_count() const
{
    int n = weight_count();
    for (const auto& v : b) n += static_cast<int>(v.size());
    return n;
}

Eigen::VectorXd MlpModel::pack() const
{
    Eigen::VectorXd p(parameter_count());
    Eigen::Index at = 0;
    for (int l = 0; l < layers(); ++l) {
        Eigen::Map<RowMajor>(p.data() + at, W[l].rows(), W[l].cols()) = W[l];
        at += W[l].size();
        p.segment(at, b[l].size()) = b[l];
        at += b[l].size();
    }
    return p;
}

void MlpModel::unpack(const Eigen::VectorXd& params)
{
    if (params.size() != parameter_count()) throw InvalidArgument("parameter vector has the wrong length");
    Eigen::Index at = 0;
    for (int l = 0; l < layers(); ++l) {
        W[l] = Eigen::Map<const RowMajor>(params.data() + at, W[l].rows(), W[l].cols());
        at += W[l].size();
        b[l] = params.segment(at, b[l].size());
        at += b[l].size();
    }
}

Eigen::VectorXd MlpModel::forward(const Eigen::VectorXd& x) const
{
    if (x.size() != input_dim())
        throw InvalidArgument("input has " + std::to_string(x.size()) + " entries, network expects " +
                              std::to_string(input_dim()));
    Eigen::VectorXd a = x;
    for (int l = 0; l < layers(); ++l) {
        Eigen::VectorXd z = W[l] * a + b[l];
        a = l + 1 < layers() ? Eigen::VectorXd(z.array().tanh()) : z;
    }
    return a;
}

MlpModel init_mlp(const std::vector<int>& dims, std::uint64_t seed)
{
    check_dims(dims);
    MlpModel model;
    model.dims = dims;
    model.seed = seed;
    Rng rng = make_stream(seed, 0, 0x696e6974ULL);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double s = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        Eigen::MatrixXd w(dims[l + 1], dims[l]);
        // Row-major fill so the draw order matches the file layout.
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = uniform(rng, -s, s);
        model.W.push_back(std::move(w));
        model.b.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    return model;
}

double mlp_objective(const MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double gamma,
                     Eigen::VectorXd* grad)
{
    check_data(model, X, Y);
    const int L = model.layers();
    std::vector<Eigen::MatrixXd> acts(static_cast<std::size_t>(L) + 1);
    acts[0] = X;
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z = acts[l] * model.W[l].transpose();
        z.rowwise() += model.b[l].transpose();
        if (l + 1 < L) z = z.array().tanh();
        acts[l + 1] = std::move(z);
    }
    const Eigen::MatrixXd err = acts[L] - Y;
    const double n_out = static_cast<double>(err.size());
    const double n_w = static_cast<double>(model.weight_count());
    double sum_w2 = 0.0;
    for (const auto& w : model.W) sum_w2 += w.squaredNorm();
    const double J = gamma * sum_w2 / n_w + (1.0 - gamma) * err.squaredNorm() / n_out;
    if (!grad) return J;

    grad->resize(model.parameter_count());
    std::vector<Eigen::Index> offsets(static_cast<std::size_t>(L));
    Eigen::Index at = 0;
    for (int l = 0; l < L; ++l) {
        offsets[l] = at;
        at += model.W[l].size() + model.b[l].size();
    }
    Eigen::MatrixXd delta = (2.0 * (1.0 - gamma) / n_out) * err;
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::MatrixXd gW = delta.transpose() * acts[l] + (2.0 * gamma / n_w) * model.W[l];
        Eigen::Map<RowMajor>(grad->data() + offsets[l], gW.rows(), gW.cols()) = gW;
        grad->segment(offsets[l] + gW.size(), model.b[l].size()) = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd back = delta * model.W[l];
            delta = back.array() * (1.0 - acts[l].array().square());
        }
    }
    return J;
}

TrainStats scg_minimize(MlpModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double gamma,
                        int max_iters, double sigma0, double lambda0, double grad_tol)
{
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
    if (max_iters < 0) throw InvalidArgument("max_iters must be >= 0");
    check_data(model, X, Y);

    MlpModel probe = model;
    probe.loss_trace.clear();
    const auto objective = [&](const Eigen::VectorXd& w, Eigen::VectorXd* g, int iter) {
        probe.unpack(w);
        const double J = mlp_objective(probe, X, Y, gamma, g);
        if (!std::isfinite(J)) throw TrainingError("non-finite loss at iteration " + std::to_string(iter));
        return J;
    };

    TrainStats stats;
    const Eigen::Index N = model.parameter_count();
    Eigen::VectorXd w = model.pack();
    Eigen::VectorXd g(N);
    double E = objective(w, &g, 0);
    stats.initial_loss = E;
    Eigen::VectorXd r = -g;
    Eigen::VectorXd p = r;
    Eigen::VectorXd s(N), g_probe(N), g_new(N);
    double lambda = lambda0;
    double lambda_bar = 0.0;
    bool success = true;
    double delta = 0.0;
    int since_restart = 0;
    model.loss_trace.clear();

    for (int k = 1; k <= max_iters; ++k) {
        if (r.norm() < grad_tol) break;
        const double p2 = p.squaredNorm();
        if (success) {
            // Second-order information from a gradient difference along p.
            const double sigma = sigma0 / std::sqrt(p2);
            objective(w + sigma * p, &g_probe, k);
            s = (g_probe - g) / sigma;
            delta = p.dot(s);
        }
        // Scale: s += (lambda - lambda_bar) p.
        delta += (lambda - lambda_bar) * p2;
        if (delta <= 0.0) {
            // Make the Hessian estimate positive definite.
            lambda_bar = 2.0 * (lambda - delta / p2);
            delta = -delta + lambda * p2;
            lambda = lambda_bar;
        }
        const double mu = p.dot(r);
        const double alpha = mu / delta;
        const Eigen::VectorXd w_new = w + alpha * p;
        // The gradient is needed whenever the step is accepted, which is
        // nearly always, so compute it together with the loss.
        const double E_new = objective(w_new, &g_new, k);
        const double comparison = 2.0 * delta * (E - E_new) / (mu * mu);

        if (comparison >= 0.0) {
            const Eigen::VectorXd r_new = -g_new;
            w = w_new;
            E = E_new;
            g = g_new;
            lambda_bar = 0.0;
            success = true;
            ++stats.accepted;
            if (++since_restart == N) {
                p = r_new;
                since_restart = 0;
                ++stats.restarts;
            } else {
                const double beta = (r_new.squaredNorm() - r_new.dot(r)) / mu;
                p = r_new + beta * p;
            }
            r = r_new;
            if (comparison >= 0.75) lambda *= 0.25;
        } else {
            lambda_bar = lambda;
            success = false;
            ++stats.rejected;
        }
        if (comparison < 0.25) lambda += delta * (1.0 - comparison) / p2;
        // Keep lambda finite when the model is already converged.
        lambda = std::min(lambda, 1e100);
        model.loss_trace.push_back(E);
        stats.iterations = k;
    }
    model.unpack(w);
    model.gamma = gamma;
    model.iterations = stats.iterations;
    model.final_loss = E;
    stats.final_loss = E;
    return stats;
}

MlpModel train_mlp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const TrainOptions& opts,
                   const ParamBox& box, TrainStats* stats)
{
    std::vector<int> dims{static_cast<int>(X.cols())};
    dims.insert(dims.end(), opts.hidden.begin(), opts.hidden.end());
    dims.push_back(static_cast<int>(Y.cols()));
    MlpModel model = init_mlp(dims, opts.seed);
    model.box = box;
    const TrainStats st = scg_minimize(model, X, Y, opts.gamma, opts.max_iters, opts.sigma0, opts.lambda0,
                                       opts.grad_tol);
    if (stats) *stats = st;
    return model;
}

Prediction predict(const MlpModel& model, const Eigen::MatrixXd& features, unsigned threads)
{
    if (features.cols() != model.input_dim())
        throw InvalidArgument("feature width " + std::to_string(features.cols()) + " does not match input layer " +
                              std::to_string(model.input_dim()));
    Prediction out;
    out.targets.resize(features.rows(), model.output_dim());
    std::vector<char> renormalized(static_cast<std::size_t>(features.rows()), 0);
    parallel_for(static_cast<std::size_t>(features.rows()), threads, [&](std::size_t i) {
        Eigen::VectorXd x = features.row(static_cast<Eigen::Index>(i)).transpose();
        const double norm = x.norm();
        if (std::abs(norm - 1.0) > 1e-9 && norm > 0.0) {
            x /= norm;
            renormalized[i] = 1;
        }
        out.targets.row(static_cast<Eigen::Index>(i)) = model.forward(x).cwiseMax(0.0).cwiseMin(1.0).transpose();
    });
    for (char c : renormalized) out.renormalized += c;
    return out;
}

namespace {

constexpr const char* kModelMagic = "stabinv-mlp";

}  // namespace

void save_model(const MlpModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    std::ostringstream header;
    header.precision(17);
    header << kModelMagic << ' ' << kModelFormatVersion << '\n';
    header << "dims";
    for (int d : model.dims) header << ' ' << d;
    header << '\n';
    header << "activation tanh identity\n";
    header << "gamma " << model.gamma << '\n';
    header << "iterations " << model.iterations << '\n';
    header << "seed " << model.seed << '\n';
    header << "final_loss " << model.final_loss << '\n';
    header << "box " << model.box.a.lo << ' ' << model.box.a.hi << ' ' << model.box.b.lo << ' ' << model.box.b.hi
           << ' ' << model.box.d.lo << ' ' << model.box.d.hi << '\n';
    header << "parameters " << model.parameter_count() << " float64 row-major\n";
    header << "end\n";
    out << header.str();
    const Eigen::VectorXd p = model.pack();
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!out) throw LoadError("write failed: " + path.string());
}

MlpModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    const auto fail = [&](int line, const std::string& what) {
        throw LoadError(path.string() + ":" + std::to_string(line) + ": " + what);
    };
    std::string line;
    int line_no = 0;
    const auto next = [&]() -> std::istringstream {
        if (!std::getline(in, line)) fail(line_no + 1, "unexpected end of header");
        ++line_no;
        return std::istringstream(line);
    };
    const auto expect = [&](std::istringstream& s, const std::string& key) {
        std::string word;
        s >> word;
        if (word != key) fail(line_no, "expected '" + key + "', found '" + word + "'");
    };

    MlpModel model;
    {
        auto s = next();
        std::string magic;
        int version = 0;
        s >> magic >> version;
        if (magic != kModelMagic) fail(line_no, "not a model file");
        if (version != kModelFormatVersion) fail(line_no, "unsupported model version " + std::to_string(version));
    }
    {
        auto s = next();
        expect(s, "dims");
        int d = 0;
        while (s >> d) model.dims.push_back(d);
        try {
            check_dims(model.dims);
        } catch (const InvalidArgument& e) {
            fail(line_no, e.what());
        }
    }
    {
        auto s = next();
        expect(s, "activation");
        std::string hidden, output;
        s >> hidden >> output;
        if (hidden != "tanh" || output != "identity") fail(line_no, "unsupported activation " + hidden + "/" + output);
    }
    {
        auto s = next();
        expect(s, "gamma");
        if (!(s >> model.gamma)) fail(line_no, "bad gamma");
    }
    {
        auto s = next();
        expect(s, "iterations");
        if (!(s >> model.iterations)) fail(line_no, "bad iterations");
    }
    {
        auto s = next();
        expect(s, "seed");
        if (!(s >> model.seed)) fail(line_no, "bad seed");
    }
    {
        auto s = next();
        expect(s, "final_loss");
        if (!(s >> model.final_loss)) fail(line_no, "bad final_loss");
    }
    {
        auto s = next();
        expect(s, "box");
        auto& bx = model.box;
        if (!(s >> bx.a.lo >> bx.a.hi >> bx.b.lo >> bx.b.hi >> bx.d.lo >> bx.d.hi)) fail(line_no, "bad box");
    }
    int count = 0;
    {
        auto s = next();
        expect(s, "parameters");
        if (!(s >> count)) fail(line_no, "bad parameter count");
    }
    {
        auto s = next();
        expect(s, "end");
    }
    for (std::size_t l = 0; l + 1 < model.dims.size(); ++l) {
        model.W.emplace_back(model.dims[l + 1], model.dims[l]);
        model.b.emplace_back(model.dims[l + 1]);
    }
    if (count != model.parameter_count())
        throw LoadError(path.string() + ": header declares " + std::to_string(count) + " parameters, dims imply " +
                        std::to_string(model.parameter_count()));
    Eigen::VectorXd p(count);
    if (!in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(count * sizeof(double))))
        throw LoadError(path.string() + ": truncated parameter block");
    if (in.peek() != std::char_traits<char>::eof()) throw LoadError(path.string() + ": trailing bytes after parameters");
    model.unpack(p);
    return model;
}

}  // namespace stabinv

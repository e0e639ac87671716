#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stabinv/dataset.hpp"
#include "stabinv/errors.hpp"
#include "stabinv/inversion.hpp"
#include "stabinv/json_io.hpp"
#include "stabinv/mlp.hpp"
#include "stabinv/random.hpp"
#include "stabinv/stability.hpp"
#include "svg.hpp"

namespace stabinv::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kOutDirEnv = "STABINV_OUT_DIR";

// Registered options of one subcommand, kept so the effective configuration
// can be echoed in the same shape a --config file uses.
class Options {
public:
    explicit Options(CLI::App* app) : app_(app) {}

    template <class T>
    CLI::Option* add(const std::string& name, T& ref, const std::string& help)
    {
        getters_.emplace_back(name, [&ref] { return json(ref); });
        return app_->add_option("--" + name, ref, help)->capture_default_str();
    }

    [[nodiscard]] json echo() const
    {
        json j = json::object();
        for (const auto& [name, get] : getters_) j[name] = get();
        return j;
    }

    [[nodiscard]] CLI::App* app() const { return app_; }

private:
    CLI::App* app_;
    std::vector<std::pair<std::string, std::function<json()>>> getters_;
};

struct Common {
    std::string out_dir;
    std::string config;
};

struct SetupArgs {
    int modes = 8;
    double source_half_width = 150.0;
    int source_cells = 8;
    int source_order = 4;
    bool cutoff = true;
    double d0 = -5.0;
    std::vector<double> box_a{-2.0, 2.0};
    std::vector<double> box_b{-2.0, 2.0};
    std::vector<double> box_d{-60.0, -10.0};

    void add(Options& o)
    {
        o.add("modes", modes, "sine modes per axis (K)");
        o.add("source-half-width", source_half_width, "half width of the source square R, km");
        o.add("source-cells", source_cells, "Gauss-Legendre cells per axis over R");
        o.add("source-order", source_order, "Gauss-Legendre order per cell");
        o.add("cutoff", cutoff, "smooth depth cutoff on/off");
        o.add("d0", d0, "cutoff depth, km (negative)");
        o.add("box-a", box_a, "range of a: lo hi")->expected(2);
        o.add("box-b", box_b, "range of b: lo hi")->expected(2);
        o.add("box-d", box_d, "range of d: lo hi, km")->expected(2);
    }

    [[nodiscard]] ParamBox box() const
    {
        ParamBox b{{box_a[0], box_a[1]}, {box_b[0], box_b[1]}, {box_d[0], box_d[1]}};
        b.validate();
        return b;
    }
    [[nodiscard]] SourceRegion region() const
    {
        SourceRegion r{source_half_width, source_cells, source_order};
        try {
            r.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
        return r;
    }
    [[nodiscard]] KernelConfig kernel() const
    {
        KernelConfig k;
        k.cutoff_enabled = cutoff;
        k.d0 = d0;
        if (!(d0 < 0.0)) throw ConfigError("d0: cutoff depth must be negative, got " + std::to_string(d0));
        return k;
    }
};

struct GenArgs {
    int count = 0;
    int q = 5;
    std::uint64_t seed = 1;
    int first_index = 0;
    double noise = 0.0;
    int grid_n = 11;
    unsigned threads = 1;
    std::string out = "dataset.csv";
    SetupArgs setup;
};

struct TrainArgs {
    std::string data;
    std::vector<int> hidden{64, 32, 16};
    double gamma = 0.2;
    int iters = 2000;
    std::uint64_t seed = 1;
    std::string model = "model.mlp";
};

struct EvalArgs {
    std::string model;
    std::string train_data;
    std::string test_data;
    int s0_count = 2000;
    std::uint64_t s0_seed = 1;
    bool oracle = false;
    bool nn_accelerated = false;
    int bins = 20;
    int lipschitz_pairs = 1000;
    std::uint64_t lipschitz_seed = 1;
    unsigned threads = 1;
    std::string tag = "eval";
};

struct StabilityArgs {
    std::string mode = "pairs";
    int trials = 1000;
    std::uint64_t seed = 1;
    int q = 5;
    double A1 = 0.0;
    double A2 = 1.0;
    double sep_min = 0.1;
    int discrete_n = 33;
    int dense_cells = 8;
    int dense_order = 6;
    int pilot = 32;
    int bins = 20;
    std::vector<double> m0{0.0, 0.0, -30.0};
    int v0_modes = 50;
    std::uint64_t v0_seed = 1;
    unsigned threads = 1;
    std::string tag = "stability";
    SetupArgs setup;
};

struct QuadArgs {
    std::vector<int> n_list{6, 11, 21, 41};
    std::uint64_t seed = 1;
    double slope_lo = -1.3;
    double slope_hi = -0.8;
    std::string tag = "quadcheck";
    SetupArgs setup;
};

struct ReportArgs {
    std::string dir;
    std::string tag = "report";
};

fs::path output_path(const Common& common, const std::string& name)
{
    const fs::path p(name);
    return p.is_absolute() ? p : fs::path(common.out_dir) / p;
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw LoadError("write failed: " + path.string());
}

std::string fmt(double x, int precision = 17)
{
    std::ostringstream s;
    s << std::setprecision(precision) << x;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void echo_config(const Common& common, const std::string& command, const Options& options, const std::string& tag,
                 std::ostream& out)
{
    json cfg = {{command, options.echo()}};
    cfg[command]["out-dir"] = common.out_dir;
    out << "config: " << cfg.dump() << '\n';
    write_text(output_path(common, tag + ".config.json"), cfg.dump(2) + "\n");
}

// Turns entries of a --config file into command-line tokens for options that
// were not given explicitly. Flags on the command line win.
std::vector<std::string> merge_config(const std::vector<std::string>& args)
{
    std::string config_path;
    std::string command;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
        if (command.empty() && !args[i].empty() && args[i][0] != '-' && (i == 0 || args[i - 1] != "--config"))
            command = args[i];
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot read config file " + config_path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError(config_path + ": expected a JSON object");
    const json section = cfg.contains(command) && cfg[command].is_object() ? cfg[command] : cfg;

    const auto given = [&](const std::string& key) {
        for (const auto& a : args)
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
        return false;
    };
    const auto token = [&](const json& v, const std::string& key) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw ConfigError(config_path + ": unsupported value for '" + key + "'");
    };

    std::vector<std::string> merged = args;
    for (const auto& [key, value] : section.items()) {
        if (key == "config" || given(key)) continue;
        if (value.is_object()) continue;  // sections for other commands
        merged.push_back("--" + key);
        if (value.is_array()) {
            for (const auto& v : value) merged.push_back(token(v, key));
        } else {
            merged.push_back(token(value, key));
        }
    }
    return merged;
}

// ---------------------------------------------------------------- gen

int cmd_gen(const Common& common, const GenArgs& a, const Options& o, std::ostream& out)
{
    echo_config(common, "gen", o, fs::path(a.out).filename().string(), out);
    if (a.count < 1) throw ConfigError("count: must be >= 1");
    if (a.noise < 0.0) throw ConfigError("noise: must be >= 0");
    if (a.grid_n < 2) throw ConfigError("grid-n: must be >= 2");
    if (a.q < 1 || a.q >= a.setup.modes * a.setup.modes)
        throw ConfigError("q: must lie in [1, " + std::to_string(a.setup.modes * a.setup.modes - 1) + "]");
    const GenerationContext ctx =
        make_generation_context(a.grid_n, a.setup.modes, a.setup.region(), a.setup.kernel(), a.setup.box());
    GenerateOptions opts;
    opts.count = a.count;
    opts.q = a.q;
    opts.seed = a.seed;
    opts.first_index = a.first_index;
    opts.noise_level = a.noise;
    opts.threads = a.threads;
    const Dataset data = generate(opts, ctx);
    const fs::path path = output_path(common, a.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_dataset(data, path);
    out << "gen: count=" << a.count << " q=" << a.q << " seed=" << a.seed << " noise=" << a.noise
        << " path=" << path.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& common, const TrainArgs& a, const Options& o, std::ostream& out)
{
    echo_config(common, "train", o, fs::path(a.model).filename().string(), out);
    if (!(a.gamma >= 0.0 && a.gamma <= 1.0)) throw ConfigError("gamma: must lie in [0, 1]");
    if (a.iters < 0) throw ConfigError("iters: must be >= 0");
    for (int h : a.hidden)
        if (h < 1) throw ConfigError("hidden: layer sizes must be positive");
    const Dataset data = load_dataset(a.data);
    TrainOptions opts;
    opts.hidden = a.hidden;
    opts.gamma = a.gamma;
    opts.max_iters = a.iters;
    opts.seed = a.seed;
    TrainStats stats;
    const MlpModel model = train_mlp(data.features, data.targets, opts, data.meta.box, &stats);
    const fs::path path = output_path(common, a.model);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_model(model, path);

    std::ostringstream trace;
    trace << "iteration,loss\n";
    for (std::size_t i = 0; i < model.loss_trace.size(); ++i) trace << i + 1 << ',' << fmt(model.loss_trace[i]) << '\n';
    write_text(fs::path(path.string() + ".loss.csv"), trace.str());

    out << "train: samples=" << data.size() << " weights=" << model.weight_count()
        << " iterations=" << stats.iterations << " accepted=" << stats.accepted << " loss " << fmt(stats.initial_loss, 6)
        << " -> " << fmt(stats.final_loss, 6) << " path=" << path.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- eval

std::string error_histograms(const EvalResult& r, int bins, std::string* csv)
{
    static const char* names[3] = {"a", "b", "d"};
    std::vector<plot::HistogramPanel> panels;
    std::ostringstream table;
    table << "parameter,bin,lo,hi,count\n";
    for (int k = 0; k < 3; ++k) {
        std::vector<double> errs(static_cast<std::size_t>(r.truth.rows()));
        double peak = 0.0;
        for (Eigen::Index i = 0; i < r.truth.rows(); ++i) {
            errs[static_cast<std::size_t>(i)] = std::abs(r.predictions(i, k) - r.truth(i, k));
            peak = std::max(peak, errs[static_cast<std::size_t>(i)]);
        }
        const double hi = std::max(0.05, std::ceil(peak / 0.05) * 0.05);
        plot::HistogramPanel panel{std::string("error in ") + names[k], "normalized absolute error", 0.0, hi,
                                   plot::bin_counts(errs, 0.0, hi, bins)};
        for (std::size_t b = 0; b < panel.counts.size(); ++b) {
            const double w = hi / static_cast<double>(panel.counts.size());
            table << names[k] << ',' << b << ',' << fmt(w * static_cast<double>(b)) << ','
                  << fmt(w * static_cast<double>(b + 1)) << ',' << panel.counts[b] << '\n';
        }
        panels.push_back(std::move(panel));
    }
    *csv = table.str();
    return plot::histogram_svg(r.method + ": error histograms over " + std::to_string(r.truth.rows()) + " cases",
                               panels);
}

int cmd_eval(const Common& common, const EvalArgs& a, const Options& o, std::ostream& out)
{
    echo_config(common, "eval", o, a.tag, out);
    if (a.bins < 1) throw ConfigError("bins: must be >= 1");

    auto t0 = std::chrono::steady_clock::now();
    MlpModel model = load_model(a.model);
    const double load_mlp = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const Dataset train = load_dataset(a.train_data);
    SampleBank S = SampleBank::from_dataset(train, "S");
    const double load_S = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    if (a.s0_count < 1 || a.s0_count > S.size())
        throw ConfigError("s0-count: must lie in [1, " + std::to_string(S.size()) + "]");
    SampleBank S0 = S.subset(a.s0_count, a.s0_seed, "S0");
    const double load_S0 = load_S + seconds_since(t0);

    const Dataset test = load_dataset(a.test_data);
    if (test.feature_dim() != model.input_dim() || test.feature_dim() != S.features.cols())
        throw ConfigError("test-data: feature width " + std::to_string(test.feature_dim()) +
                          " does not match the model (" + std::to_string(model.input_dim()) + ") or bank (" +
                          std::to_string(S.features.cols()) + ")");

    const LipschitzSample lip = predict_lipschitz(model, test.features, a.lipschitz_pairs, a.lipschitz_seed);

    std::vector<std::unique_ptr<Inverter>> methods;
    std::vector<double> load_times;
    methods.push_back(std::make_unique<MlpInverter>(model, a.threads));
    load_times.push_back(load_mlp);
    methods.push_back(std::make_unique<NnInverter>(S, a.nn_accelerated));
    load_times.push_back(load_S);
    methods.push_back(std::make_unique<NnInverter>(S0, a.nn_accelerated));
    load_times.push_back(load_S0);
    if (a.oracle) {
        methods.push_back(std::make_unique<FixedInverter>("oracle", test.targets));
        load_times.push_back(0.0);
    }

    std::ostringstream summary;
    summary << "method,cases,err_a,err_b,err_d,err_mean\n";
    std::ostringstream table;
    table << std::left << std::setw(10) << "method" << std::right << std::setw(12) << "error" << std::setw(14)
          << "load (s)" << std::setw(14) << "run (s)" << '\n';
    std::vector<std::string> labels;
    std::vector<double> errors;
    std::vector<EvalResult> results;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        EvalResult r = evaluate(*methods[i], test);
        r.load_seconds = load_times[i];
        summary << r.method << ',' << test.size() << ',' << fmt(r.mean_abs_error[0]) << ','
                << fmt(r.mean_abs_error[1]) << ',' << fmt(r.mean_abs_error[2]) << ',' << fmt(r.mean_error()) << '\n';
        table << std::left << std::setw(10) << r.method << std::right << std::fixed << std::setprecision(4)
              << std::setw(12) << r.mean_error() << std::setprecision(4) << std::setw(14) << r.load_seconds
              << std::setw(14) << r.run_seconds << '\n'
              << std::defaultfloat;

        std::ostringstream cases;
        write_eval_csv(r, cases);
        write_text(output_path(common, a.tag + "_" + r.method + ".csv"), cases.str());
        std::string hist_csv;
        write_text(output_path(common, a.tag + "_" + r.method + "_hist.svg"), error_histograms(r, a.bins, &hist_csv));
        write_text(output_path(common, a.tag + "_" + r.method + "_hist.csv"), hist_csv);
        labels.push_back(r.method);
        errors.push_back(r.mean_error());
        results.push_back(std::move(r));
    }
    table << "\nper-parameter error (a, b, d):\n";
    for (const auto& r : results)
        table << "  " << std::left << std::setw(8) << r.method << std::right << std::fixed << std::setprecision(4)
              << ' ' << r.mean_abs_error[0] << ' ' << r.mean_abs_error[1] << ' ' << r.mean_abs_error[2] << '\n'
              << std::defaultfloat;
    if (results[0].run_seconds > 0.0)
        table << "nn_S / mlp run-time ratio: " << fmt(results[1].run_seconds / results[0].run_seconds, 4) << '\n';
    table << "mlp Lipschitz ratio over " << lip.ratios.size() << " pairs: max " << fmt(lip.max_ratio, 6)
          << ", median " << fmt(lip.median_ratio, 6) << '\n';

    write_text(output_path(common, a.tag + "_summary.csv"), summary.str());
    write_text(output_path(common, a.tag + "_table.txt"), table.str());
    write_text(output_path(common, a.tag + "_errors.svg"),
               plot::bar_chart_svg("mean normalized error", "error", labels, errors));
    out << table.str();
    return kExitOk;
}

// ---------------------------------------------------------------- stability

int cmd_stability(const Common& common, const StabilityArgs& a, const Options& o, std::ostream& out)
{
    echo_config(common, "stability", o, a.tag, out);
    if (a.mode != "pairs" && a.mode != "fixed-target")
        throw ConfigError("mode: expected 'pairs' or 'fixed-target', got '" + a.mode + "'");
    if (a.m0.size() != 3) throw ConfigError("m0: expected three values a b d");
    if (a.discrete_n < 2) throw ConfigError("discrete-n: must be >= 2");

    StabilityContextOptions opts;
    opts.modes_per_axis = a.setup.modes;
    opts.region = a.setup.region();
    opts.kernel = a.setup.kernel();
    opts.box = a.setup.box();
    opts.discrete_n = a.discrete_n;
    opts.dense_cells = a.dense_cells;
    opts.dense_order = a.dense_order;
    const StabilityContext ctx = make_stability_context(opts);

    StabilityConfig cfg;
    cfg.A1 = a.A1;
    cfg.A2 = a.A2;
    cfg.q = a.q;
    cfg.trials = a.trials;
    cfg.seed = a.seed;
    cfg.pair_separation_min = a.sep_min;
    cfg.pilot_samples = a.pilot;
    cfg.histogram_bins = a.bins;
    cfg.threads = a.threads;
    const int modes = a.setup.modes * a.setup.modes;
    if (a.q < 1 || a.q >= modes) throw ConfigError("q: must lie in [1, " + std::to_string(modes - 1) + "]");

    StabilityReport report;
    if (a.mode == "pairs") {
        report = empirical_lipschitz(cfg, ctx);
    } else {
        if (a.v0_modes < 1 || a.v0_modes >= modes)
            throw ConfigError("v0-modes: must lie in [1, " + std::to_string(modes - 1) + "]");
        const FaultParams m0{a.m0[0], a.m0[1], a.m0[2]};
        const SvdSubspace sub = svd_subspace(assemble(m0, *ctx.continuous), a.v0_modes);
        Rng rng = make_stream(a.v0_seed, 0);
        Eigen::VectorXd w(a.v0_modes);
        for (int i = 0; i < a.v0_modes; ++i) w[i] = standard_normal(rng);
        const Eigen::VectorXd v0 = a.A2 * (sub.basis() * w).normalized();
        if (cfg.A1 <= 0.0) cfg.A1 = default_A1(ctx, a.q, a.seed, a.pilot);
        report = fixed_target_lipschitz(m0, v0, cfg, ctx);
    }

    std::ostringstream summary, trials, hist;
    report.write_summary(summary);
    report.write_trials_csv(trials);
    hist << "bin,log10_lo,log10_hi,count\n";
    const auto& h = report.histogram;
    const double w = (h.log10_hi - h.log10_lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        hist << b << ',' << fmt(h.log10_lo + w * static_cast<double>(b)) << ','
             << fmt(h.log10_lo + w * static_cast<double>(b + 1)) << ',' << h.counts[b] << '\n';
    write_text(output_path(common, a.tag + "_summary.txt"), summary.str());
    write_text(output_path(common, a.tag + "_trials.csv"), trials.str());
    write_text(output_path(common, a.tag + "_hist.csv"), hist.str());
    write_text(output_path(common, a.tag + "_hist.svg"),
               plot::histogram_svg("stability ratios (" + report.kind + ")",
                                   {{"log10 of ratio", "log10 ratio", h.log10_lo, h.log10_hi, h.counts}}));

    out << "stability: mode=" << a.mode << " c_hat=" << fmt(report.c_hat, 6)
        << " c_hat_discrete=" << fmt(report.c_hat_discrete, 6)
        << " min_discrete_over_continuous=" << fmt(report.min_discrete_over_continuous, 6)
        << " completed=" << report.completed << " skipped_constraint=" << report.skipped_constraint
        << " skipped_separation=" << report.skipped_separation << " A1=" << fmt(report.A1, 6) << '\n';
    if (!(report.c_hat > 0.0)) throw ReportError("c_hat is not positive");
    return kExitOk;
}

// ---------------------------------------------------------------- quadcheck

int cmd_quadcheck(const Common& common, const QuadArgs& a, const Options& o, std::ostream& out)
{
    echo_config(common, "quadcheck", o, a.tag, out);
    for (int n : a.n_list)
        if (n < 2) throw ConfigError("n-list: grid sizes must be >= 2");
    const OperatorSetup setup(sine_basis(a.setup.modes, a.setup.source_half_width), observation_grid(2),
                              a.setup.kernel(), a.setup.region());
    const QuadratureCheck check = quadrature_order_check(default_test_functions(a.seed, setup), a.n_list);

    std::ostringstream errors, slopes;
    errors << "function,n,M,error\n";
    slopes << "function,slope,exact,pass\n";
    bool all_pass = true;
    for (const auto& s : check.series) {
        for (std::size_t i = 0; i < s.n.size(); ++i)
            errors << s.name << ',' << s.n[i] << ',' << s.M[i] << ',' << fmt(s.error[i]) << '\n';
        const bool pass = s.exact || (s.slope >= a.slope_lo && s.slope <= a.slope_hi);
        all_pass = all_pass && pass;
        slopes << s.name << ',' << (s.exact ? std::string("nan") : fmt(s.slope)) << ',' << (s.exact ? 1 : 0) << ','
               << (pass ? 1 : 0) << '\n';
        out << "quadcheck: " << s.name << ' '
            << (s.exact ? std::string("exact at every n") : "slope " + fmt(s.slope, 4)) << (pass ? "" : " (outside window)")
            << '\n';
    }
    write_text(output_path(common, a.tag + ".csv"), errors.str());
    write_text(output_path(common, a.tag + "_slopes.csv"), slopes.str());
    if (!all_pass) throw ReportError("quadrature slope outside [" + fmt(a.slope_lo) + ", " + fmt(a.slope_hi) + "]");
    return kExitOk;
}

// ---------------------------------------------------------------- report

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cmd_report(const Common& common, const ReportArgs& a, const Options& o, std::ostream& out)
{
    const fs::path dir = a.dir.empty() ? fs::path(common.out_dir) : fs::path(a.dir);
    echo_config(common, "report", o, a.tag, out);
    std::ostringstream md;
    md << "# Results\n\n";
    bool any = false;

    if (fs::exists(dir / "eval_summary.csv")) {
        any = true;
        md << "## Inversion accuracy\n\n```\n" << read_file(dir / "eval_summary.csv") << "```\n\n";
        if (fs::exists(dir / "eval_table.txt")) md << "```\n" << read_file(dir / "eval_table.txt") << "```\n\n";
        std::istringstream rows(read_file(dir / "eval_summary.csv"));
        std::string line;
        std::getline(rows, line);
        std::vector<std::string> labels;
        std::vector<double> values;
        while (std::getline(rows, line)) {
            std::vector<std::string> cells;
            std::istringstream cs(line);
            std::string cell;
            while (std::getline(cs, cell, ',')) cells.push_back(cell);
            if (cells.size() != 6) throw ReportError("eval_summary.csv: malformed row '" + line + "'");
            labels.push_back(cells[0]);
            values.push_back(std::stod(cells[5]));
        }
        write_text(output_path(common, a.tag + "_errors.svg"),
                   plot::bar_chart_svg("mean normalized error", "error", labels, values));
    }
    if (fs::exists(dir / "stability_summary.txt")) {
        any = true;
        md << "## Stability\n\n```\n";
        std::istringstream lines(read_file(dir / "stability_summary.txt"));
        std::string line;
        while (std::getline(lines, line))
            if (line.rfind("argmin.u", 0) != 0 && line.rfind("argmin.v", 0) != 0) md << line << '\n';
        md << "```\n\n";
    }
    if (fs::exists(dir / "quadcheck_slopes.csv")) {
        any = true;
        md << "## Quadrature order\n\n```\n" << read_file(dir / "quadcheck_slopes.csv") << "```\n\n";
    }
    if (!any) throw ConfigError("dir: no eval, stability or quadcheck results in " + dir.string());
    write_text(output_path(common, a.tag + ".md"), md.str());
    out << "report: wrote " << output_path(common, a.tag + ".md").string() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Stability and learning-based inversion experiments for half-space fault models", "stabinv"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    Common common;
    if (const char* env = std::getenv(kOutDirEnv)) common.out_dir = env;
    if (common.out_dir.empty()) common.out_dir = ".";
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out-dir", common.out_dir, std::string("output directory (default $") + kOutDirEnv + " or .)");
        sub->add_option("--config", common.config, "JSON file with option values; flags override it");
    };

    GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
    Options gen_opts(gen_cmd);
    gen_opts.add("count", gen.count, "number of samples")->required();
    gen_opts.add("q", gen.q, "number of singular vectors carrying the slip");
    gen_opts.add("seed", gen.seed, "random seed");
    gen_opts.add("first-index", gen.first_index, "index of the first sample stream (for disjoint splits)");
    gen_opts.add("noise", gen.noise, "noise level relative to the sup norm (0 = clean)");
    gen_opts.add("grid-n", gen.grid_n, "observation points per axis");
    gen_opts.add("threads", gen.threads, "worker threads");
    gen_opts.add("out", gen.out, "output CSV (relative to --out-dir; .gz compresses)");
    gen.setup.add(gen_opts);
    add_common(gen_cmd);

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "train the MLP surrogate");
    Options train_opts(train_cmd);
    train_opts.add("data", train.data, "training dataset CSV")->required();
    train_opts.add("hidden", train.hidden, "hidden layer sizes");
    train_opts.add("gamma", train.gamma, "weight of the mean squared weight term");
    train_opts.add("iters", train.iters, "scaled conjugate gradient iterations");
    train_opts.add("seed", train.seed, "initialization seed");
    train_opts.add("model", train.model, "output model file (relative to --out-dir)");
    add_common(train_cmd);

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "compare MLP and nearest-neighbor inversion");
    Options eval_opts(eval_cmd);
    eval_opts.add("model", ev.model, "trained model file")->required();
    eval_opts.add("train-data", ev.train_data, "dataset used as the nearest-neighbor bank S")->required();
    eval_opts.add("test-data", ev.test_data, "held-out dataset")->required();
    eval_opts.add("s0-count", ev.s0_count, "size of the reduced bank S0");
    eval_opts.add("s0-seed", ev.s0_seed, "seed selecting S0");
    eval_opts.add("oracle", ev.oracle, "also evaluate a method that returns the true parameters");
    eval_opts.add("nn-accelerated", ev.nn_accelerated, "batched nearest-neighbor screening instead of a linear scan");
    eval_opts.add("bins", ev.bins, "histogram bins");
    eval_opts.add("lipschitz-pairs", ev.lipschitz_pairs, "pairs for the MLP Lipschitz ratio");
    eval_opts.add("lipschitz-seed", ev.lipschitz_seed, "seed for the Lipschitz pairs");
    eval_opts.add("threads", ev.threads, "worker threads for MLP prediction");
    eval_opts.add("tag", ev.tag, "output file prefix");
    add_common(eval_cmd);

    StabilityArgs st;
    CLI::App* stab_cmd = app.add_subcommand("stability", "estimate the Lipschitz stability constant");
    Options stab_opts(stab_cmd);
    stab_opts.add("mode", st.mode, "pairs or fixed-target");
    stab_opts.add("trials", st.trials, "number of sampled pairs");
    stab_opts.add("seed", st.seed, "random seed");
    stab_opts.add("q", st.q, "rank of E_m");
    stab_opts.add("A1", st.A1, "minimum data norm (0 = 0.05 x median of unit slips)");
    stab_opts.add("A2", st.A2, "maximum slip norm");
    stab_opts.add("sep-min", st.sep_min, "minimum |m - m'|");
    stab_opts.add("discrete-n", st.discrete_n, "points per axis of the discrete grid");
    stab_opts.add("dense-cells", st.dense_cells, "cells per axis of the dense reference rule");
    stab_opts.add("dense-order", st.dense_order, "Gauss-Legendre order of the dense reference rule");
    stab_opts.add("pilot", st.pilot, "pilot samples for A1 and feasibility");
    stab_opts.add("bins", st.bins, "histogram bins");
    stab_opts.add("m0", st.m0, "fixed-target parameters a b d")->expected(3);
    stab_opts.add("v0-modes", st.v0_modes, "singular vectors in the fixed target slip");
    stab_opts.add("v0-seed", st.v0_seed, "seed for the fixed target slip");
    stab_opts.add("threads", st.threads, "worker threads");
    stab_opts.add("tag", st.tag, "output file prefix");
    st.setup.add(stab_opts);
    add_common(stab_cmd);

    QuadArgs qc;
    CLI::App* quad_cmd = app.add_subcommand("quadcheck", "convergence order of the observation quadrature");
    Options quad_opts(quad_cmd);
    quad_opts.add("n-list", qc.n_list, "grid sizes per axis");
    quad_opts.add("seed", qc.seed, "seed for the forward-data test function");
    quad_opts.add("slope-lo", qc.slope_lo, "lower end of the accepted slope window");
    quad_opts.add("slope-hi", qc.slope_hi, "upper end of the accepted slope window");
    quad_opts.add("tag", qc.tag, "output file prefix");
    qc.setup.add(quad_opts);
    add_common(quad_cmd);

    ReportArgs rep;
    CLI::App* report_cmd = app.add_subcommand("report", "collect results into a markdown summary");
    Options report_opts(report_cmd);
    report_opts.add("dir", rep.dir, "directory holding results (default --out-dir)");
    report_opts.add("tag", rep.tag, "output file prefix");
    add_common(report_cmd);

    try {
        std::vector<std::string> args = merge_config(raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << "error: " << e.what() << "\n\n" << sub->help();
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen(common, gen, gen_opts, out);
        if (train_cmd->parsed()) return cmd_train(common, train, train_opts, out);
        if (eval_cmd->parsed()) return cmd_eval(common, ev, eval_opts, out);
        if (stab_cmd->parsed()) return cmd_stability(common, st, stab_opts, out);
        if (quad_cmd->parsed()) return cmd_quadcheck(common, qc, quad_opts, out);
        if (report_cmd->parsed()) return cmd_report(common, rep, report_opts, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const LoadError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace stabinv::cli

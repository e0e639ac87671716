#include "stabinv/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "stabinv/errors.hpp"
#include "stabinv/json_io.hpp"
#include "stabinv/parallel.hpp"
#include "stabinv/random.hpp"

namespace stabinv {

namespace {

constexpr std::uint64_t kSampleStream = 0x73616d706c65ULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr int kMaxRedraws = 16;

Eigen::VectorXd noisy(const Eigen::VectorXd& data, double level, Rng& rng)
{
    const double sigma = level * data.cwiseAbs().maxCoeff();
    Eigen::VectorXd out = data;
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += sigma * standard_normal(rng);
    const double norm = out.norm();
    if (!(norm > 0.0)) throw SampleError("noisy data vector vanished");
    return out / norm;
}

bool has_suffix(const std::filesystem::path& path, const std::string& suffix)
{
    const std::string s = path.string();
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void append_number(std::string& out, double x)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    out.append(buf, res.ptr);
}

void write_body(const std::filesystem::path& path, const std::string& body)
{
    if (has_suffix(path, ".gz")) {
        gzFile gz = gzopen(path.c_str(), "wb9");
        if (!gz) throw LoadError("cannot open " + path.string() + " for writing");
        const bool ok = gzwrite(gz, body.data(), static_cast<unsigned>(body.size())) == static_cast<int>(body.size());
        if (gzclose(gz) != Z_OK || !ok) throw LoadError("write failed: " + path.string());
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    out << body;
    if (!out) throw LoadError("write failed: " + path.string());
}

std::string read_body(const std::filesystem::path& path)
{
    // gzread passes uncompressed files through unchanged.
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw LoadError("cannot open " + path.string());
    std::string body;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof buf)) > 0) body.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(gz);
    if (failed) throw LoadError(path.string() + ": corrupt compressed stream");
    return body;
}

std::string expected_header(int columns)
{
    std::string h = "a,b,d";
    for (int j = 1; j <= columns; ++j) h += ",f_" + std::to_string(j);
    return h;
}

}  // namespace

Dataset Dataset::slice(int begin, int end) const
{
    if (begin < 0 || end > size() || begin > end) throw InvalidArgument("Dataset::slice: bad range");
    Dataset out;
    out.meta = meta;
    out.meta.count = end - begin;
    out.meta.first_index = meta.first_index + begin;
    out.features = features.middleRows(begin, end - begin);
    out.targets = targets.middleRows(begin, end - begin);
    out.raw_m.assign(raw_m.begin() + begin, raw_m.begin() + end);
    return out;
}

GenerationContext make_generation_context(int grid_n, int modes_per_axis, const SourceRegion& region,
                                          const KernelConfig& kernel, const ParamBox& box)
{
    box.validate();
    GenerationContext ctx;
    ctx.box = box;
    ctx.setup = std::make_shared<OperatorSetup>(sine_basis(modes_per_axis, region.half_width),
                                                observation_grid(grid_n), kernel, region);
    return ctx;
}

Dataset generate(const GenerateOptions& opts, const GenerationContext& ctx)
{
    if (opts.count < 1) throw InvalidArgument("generate: count must be >= 1");
    if (opts.first_index < 0) throw InvalidArgument("generate: first_index must be >= 0");
    if (opts.noise_level < 0.0) throw InvalidArgument("generate: noise level must be >= 0");
    const OperatorSetup& setup = *ctx.setup;
    if (opts.q < 1 || opts.q >= setup.cols())
        throw InvalidArgument("generate: q must lie in [1, " + std::to_string(setup.cols() - 1) + "]");

    Dataset data;
    data.meta.seed = opts.seed;
    data.meta.count = opts.count;
    data.meta.first_index = opts.first_index;
    data.meta.q = opts.q;
    data.meta.grid_n = setup.grid().n_per_axis;
    data.meta.grid_half_width = setup.grid().half_width;
    data.meta.modes_per_axis = setup.basis().modes_per_axis();
    data.meta.region = setup.region();
    data.meta.kernel = setup.kernel();
    data.meta.box = ctx.box;
    data.meta.noise_level = opts.noise_level;
    data.features.resize(opts.count, setup.rows());
    data.targets.resize(opts.count, 3);
    data.raw_m.resize(opts.count);

    parallel_for(static_cast<std::size_t>(opts.count), opts.threads, [&](std::size_t i) {
        const auto index = static_cast<std::uint64_t>(opts.first_index) + i;
        Rng rng = make_stream(opts.seed, index, kSampleStream);
        const ParamBox& box = ctx.box;
        const FaultParams m{uniform(rng, box.a.lo, box.a.hi), uniform(rng, box.b.lo, box.b.hi),
                            uniform(rng, box.d.lo, box.d.hi)};
        const OperatorMatrix A = assemble(m, setup);
        const SvdSubspace sub = svd_subspace(A, opts.q);

        Eigen::VectorXd values;
        for (int attempt = 0;; ++attempt) {
            if (attempt == kMaxRedraws)
                throw SampleError("sample " + std::to_string(index) + ": data vector vanished for every draw of w");
            Eigen::VectorXd w(opts.q);
            if (opts.forced_weights) {
                w = opts.forced_weights(static_cast<int>(index));
                if (w.size() != opts.q) throw InvalidArgument("forced weights must have q entries");
            } else {
                for (int k = 0; k < opts.q; ++k) w[k] = standard_normal(rng);
            }
            values = forward(A, sub.basis() * w);
            if (values.norm() >= 1e-14) break;
            if (opts.forced_weights)
                throw SampleError("sample " + std::to_string(index) + ": forced weights give a vanishing data vector");
        }
        if (opts.noise_level > 0.0) {
            Rng noise_rng = make_stream(opts.seed, index, kNoiseStream);
            values = noisy(values, opts.noise_level, noise_rng);
        } else {
            values /= values.norm();
        }
        data.features.row(static_cast<Eigen::Index>(i)) = values.transpose();
        data.targets.row(static_cast<Eigen::Index>(i)) = box.to_unit(m).transpose();
        data.raw_m[i] = m;
    });
    return data;
}

Eigen::VectorXd add_noise(const Eigen::VectorXd& data, double level, std::uint64_t seed)
{
    if (level < 0.0) throw InvalidArgument("add_noise: level must be >= 0");
    if (level == 0.0) return data;
    Rng rng = make_stream(seed, 0, kNoiseStream);
    return noisy(data, level, rng);
}

std::filesystem::path metadata_path(const std::filesystem::path& path)
{
    return std::filesystem::path(path.string() + ".meta.json");
}

void save_dataset(const Dataset& data, const std::filesystem::path& path)
{
    const int M = data.feature_dim();
    if (M != data.meta.feature_dim())
        throw InvalidArgument("save_dataset: feature width does not match the grid in the metadata");
    std::string body = expected_header(M) + '\n';
    body.reserve(body.size() + static_cast<std::size_t>(data.size()) * (M + 3) * 24);
    for (int i = 0; i < data.size(); ++i) {
        const FaultParams& m = data.raw_m[static_cast<std::size_t>(i)];
        append_number(body, m.a);
        body += ',';
        append_number(body, m.b);
        body += ',';
        append_number(body, m.d);
        for (int j = 0; j < M; ++j) {
            body += ',';
            append_number(body, data.features(i, j));
        }
        body += '\n';
    }
    write_body(path, body);

    nlohmann::ordered_json meta = data.meta;
    meta["count"] = data.size();
    std::ofstream out(metadata_path(path), std::ios::trunc);
    if (!out) throw LoadError("cannot open " + metadata_path(path).string() + " for writing");
    out << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path)
{
    const auto meta_file = metadata_path(path);
    std::ifstream meta_in(meta_file);
    if (!meta_in) throw LoadError("missing metadata file " + meta_file.string());
    Dataset data;
    nlohmann::ordered_json meta_json;
    try {
        meta_json = nlohmann::ordered_json::parse(meta_in);
        data.meta = meta_json.get<DatasetMeta>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(meta_file.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw LoadError(meta_file.string() + ": " + e.what());
    }
    if (data.meta.format_version != kDatasetFormatVersion)
        throw LoadError(meta_file.string() + ": unsupported format version " +
                        std::to_string(data.meta.format_version));
    const int M = data.meta.feature_dim();
    if (meta_json.contains("columns") && meta_json["columns"].get<int>() != M)
        throw LoadError(meta_file.string() + ": columns does not match grid_n^2");

    const std::string body = read_body(path);
    std::size_t pos = 0;
    int line_no = 0;
    const auto next_line = [&](std::string_view& line) {
        if (pos >= body.size()) return false;
        std::size_t end = body.find('\n', pos);
        if (end == std::string::npos) end = body.size();
        line = std::string_view(body).substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        ++line_no;
        return true;
    };
    const auto fail = [&](const std::string& what) {
        throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + what);
    };

    std::string_view line;
    if (!next_line(line)) fail("empty file");
    const int header_cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    if (line != expected_header(M))
        fail("header has " + std::to_string(header_cols) + " columns, metadata implies " + std::to_string(M + 3));

    const int count = data.meta.count;
    data.features.resize(count, M);
    data.targets.resize(count, 3);
    data.raw_m.resize(static_cast<std::size_t>(count));
    std::vector<double> row(static_cast<std::size_t>(M + 3));
    int i = 0;
    while (next_line(line)) {
        if (line.empty() && pos >= body.size()) break;
        if (i == count) fail("more rows than the " + std::to_string(count) + " in the metadata");
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int j = 0; j < M + 3; ++j) {
            const auto res = std::from_chars(p, end, row[static_cast<std::size_t>(j)]);
            if (res.ec != std::errc())
                fail("malformed value in column " + std::to_string(j + 1));
            p = res.ptr;
            if (j + 1 < M + 3) {
                if (p == end || *p != ',')
                    fail("expected " + std::to_string(M + 3) + " columns, found " + std::to_string(j + 1));
                ++p;
            }
        }
        if (p != end) fail("trailing data after column " + std::to_string(M + 3));
        const FaultParams m{row[0], row[1], row[2]};
        data.raw_m[static_cast<std::size_t>(i)] = m;
        data.targets.row(i) = data.meta.box.to_unit(m).transpose();
        for (int j = 0; j < M; ++j) data.features(i, j) = row[static_cast<std::size_t>(j + 3)];
        ++i;
    }
    if (i != count) {
        ++line_no;
        fail("file ends after " + std::to_string(i) + " of " + std::to_string(count) + " rows");
    }
    return data;
}

}  // namespace stabinv

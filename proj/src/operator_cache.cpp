#include "stabinv/operator_cache.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stabinv/errors.hpp"

namespace stabinv {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'T', 'I', 'N', 'V', 'O', 'P', '\0'};
constexpr std::uint32_t kVersion = 1;

class Fnv1a {
public:
    void bytes(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <class T>
    void value(const T& v)
    {
        bytes(&v, sizeof(T));
    }
    [[nodiscard]] std::uint64_t digest() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

template <class T>
void put(std::ostream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void get(std::istream& in, T& v, const std::filesystem::path& path)
{
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw LoadError(path.string() + ": truncated operator file");
}

}  // namespace

std::uint64_t operator_cache_key(const FaultParams& m, const OperatorSetup& setup)
{
    Fnv1a h;
    h.value(kVersion);
    h.value(m.a);
    h.value(m.b);
    h.value(m.d);
    h.value(setup.basis().modes_per_axis());
    h.value(setup.basis().half_width());
    for (const auto& p : setup.grid().points) h.bytes(p.data(), sizeof(double) * 2);
    h.bytes(setup.grid().weights.data(), sizeof(double) * setup.grid().weights.size());
    h.value(setup.kernel().cutoff_enabled);
    h.value(setup.kernel().d0);
    h.value(static_cast<int>(setup.kernel().kind));
    h.value(setup.region().half_width);
    h.value(setup.region().cells_per_axis);
    h.value(setup.region().order);
    return h.digest();
}

void write_operator(const std::filesystem::path& path, const OperatorMatrix& A, std::uint64_t key)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + path.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    put(out, kVersion);
    put(out, key);
    put(out, static_cast<std::int64_t>(A.rows()));
    put(out, static_cast<std::int64_t>(A.cols()));
    put(out, A.m.a);
    put(out, A.m.b);
    put(out, A.m.d);
    for (Eigen::Index j = 0; j < A.rows(); ++j) put(out, A.sqrt_weights[j]);
    for (Eigen::Index j = 0; j < A.rows(); ++j)
        for (Eigen::Index k = 0; k < A.cols(); ++k) put(out, A.weighted(j, k));
    if (!out) throw LoadError("write failed: " + path.string());
}

std::optional<OperatorMatrix> read_operator(const std::filesystem::path& path, std::uint64_t expected_key)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic)
        throw LoadError(path.string() + ": not an operator cache file");
    std::uint32_t version = 0;
    get(in, version, path);
    if (version != kVersion)
        throw LoadError(path.string() + ": unsupported operator cache version " + std::to_string(version));
    std::uint64_t key = 0;
    get(in, key, path);
    if (key != expected_key) return std::nullopt;
    std::int64_t rows = 0, cols = 0;
    get(in, rows, path);
    get(in, cols, path);
    if (rows <= 0 || cols <= 0 || rows > (1 << 24) || cols > (1 << 20))
        throw LoadError(path.string() + ": bad matrix dimensions");
    OperatorMatrix A;
    get(in, A.m.a, path);
    get(in, A.m.b, path);
    get(in, A.m.d, path);
    A.sqrt_weights.resize(rows);
    for (Eigen::Index j = 0; j < rows; ++j) get(in, A.sqrt_weights[j], path);
    A.weighted.resize(rows, cols);
    for (Eigen::Index j = 0; j < rows; ++j)
        for (Eigen::Index k = 0; k < cols; ++k) get(in, A.weighted(j, k), path);
    return A;
}

OperatorCache::OperatorCache(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_);
}

std::filesystem::path OperatorCache::path_for(std::uint64_t key) const
{
    std::ostringstream name;
    name << std::hex << std::setw(16) << std::setfill('0') << key << ".op";
    return dir_ / name.str();
}

OperatorMatrix OperatorCache::get_or_assemble(const FaultParams& m, const OperatorSetup& setup)
{
    const std::uint64_t key = operator_cache_key(m, setup);
    const auto path = path_for(key);
    if (std::filesystem::exists(path)) {
        if (auto A = read_operator(path, key)) {
            ++hits_;
            return *A;
        }
    }
    ++misses_;
    OperatorMatrix A = assemble(m, setup);
    write_operator(path, A, key);
    return A;
}

}  // namespace stabinv

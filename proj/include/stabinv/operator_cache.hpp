#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "stabinv/operator.hpp"

namespace stabinv {

/// FNV-1a hash of everything that determines A_m: m, basis, grid points and
/// weights, kernel configuration and source quadrature.
std::uint64_t operator_cache_key(const FaultParams& m, const OperatorSetup& setup);

// Binary layout: 8-byte magic, u32 version, u64 key, i64 rows, i64 cols,
// m (3 doubles), sqrt_weights (rows doubles), weighted matrix row-major.
// All values little-endian as stored by the host.
void write_operator(const std::filesystem::path& path, const OperatorMatrix& A, std::uint64_t key);

/// Reads a cached matrix. Returns nullopt when the stored key differs from
/// `expected_key`; throws LoadError on a bad magic, version or truncation.
std::optional<OperatorMatrix> read_operator(const std::filesystem::path& path, std::uint64_t expected_key);

// Directory of cached matrices, one file per key.
class OperatorCache {
public:
    explicit OperatorCache(std::filesystem::path dir);

    [[nodiscard]] std::filesystem::path path_for(std::uint64_t key) const;
    OperatorMatrix get_or_assemble(const FaultParams& m, const OperatorSetup& setup);

    [[nodiscard]] int hits() const { return hits_; }
    [[nodiscard]] int misses() const { return misses_; }

private:
    std::filesystem::path dir_;
    int hits_ = 0;
    int misses_ = 0;
};

}  // namespace stabinv

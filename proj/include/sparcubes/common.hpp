#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sparcubes {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Face = std::array<std::uint32_t, 3>;

/// Base error for everything thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Error raised by a pipeline stage; `stage()` names the stage that failed.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

/// Collects non-fatal warnings from loaders and repair passes.
struct Diagnostics {
    std::vector<std::string> warnings;
    void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

inline void warn(Diagnostics* diag, std::string msg) {
    if (diag) diag->warn(std::move(msg));
}

namespace detail {

struct DisjointSets {
    std::vector<std::uint32_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a), b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

} // namespace detail

} // namespace sparcubes

#pragma once

// Sparse cube grid: the narrow-band cubes around the input surface, their
// deduplicated corner lattice, and the per-corner fields (udf, sign label,
// phi, deformation).
//
// The lattice covers [-1, 1]^3 with R cubes per axis, so h = 2 / R. Inputs are
// expected in the canonical [-0.95, 0.95]^3 frame, which leaves a margin of
// free cells around the surface. Cubes and corners are kept sorted by their
// packed lattice key, which makes construction and serialization
// deterministic.
//
// Corner order inside a cube: corner c sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1).

#include <atomic>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "bvh.hpp"
#include "common.hpp"
#include "geometry.hpp"
#include "parallel.hpp"

namespace sparcubes {

/// Lattice coordinate packed into 64 bits, 21 bits per axis (z most significant).
struct CornerKey {
    std::uint64_t value = 0;

    static constexpr std::uint64_t kMask = (1ull << 21) - 1;

    static CornerKey pack(int i, int j, int k) {
        return {(static_cast<std::uint64_t>(i) & kMask) | ((static_cast<std::uint64_t>(j) & kMask) << 21) |
                ((static_cast<std::uint64_t>(k) & kMask) << 42)};
    }
    static CornerKey pack(const Vec3i& c) { return pack(c[0], c[1], c[2]); }

    Vec3i unpack() const {
        return {static_cast<int>(value & kMask), static_cast<int>((value >> 21) & kMask),
                static_cast<int>((value >> 42) & kMask)};
    }
    auto operator<=>(const CornerKey&) const = default;
};

inline constexpr int kMinResolution = 64;
inline constexpr int kMaxResolution = 1024;
inline constexpr double kDefaultBand = 2.0;

/// Dense bit set over a box of lattice sites; rows along x are word aligned.
class LatticeBits {
  public:
    LatticeBits() = default;
    LatticeBits(int nx, int ny, int nz)
        : nx_(nx), ny_(ny), nz_(nz), words_per_row_((nx + 63) / 64),
          bits_(static_cast<std::size_t>(words_per_row_) * ny * nz, 0) {}

    bool in_range(int i, int j, int k) const { return i >= 0 && j >= 0 && k >= 0 && i < nx_ && j < ny_ && k < nz_; }

    bool test(int i, int j, int k) const { return (word(i, j, k) >> (i & 63)) & 1u; }
    void set(int i, int j, int k) { word(i, j, k) |= 1ull << (i & 63); }
    /// Sets bit and reports whether it was clear before.
    bool test_and_set(int i, int j, int k) {
        std::uint64_t& w = word(i, j, k);
        const std::uint64_t m = 1ull << (i & 63);
        const bool was = w & m;
        w |= m;
        return !was;
    }

    /// Sets bits [i0, i1] on row (j, k); bounds are clamped.
    void set_run(int i0, int i1, int j, int k) {
        i0 = std::max(i0, 0);
        i1 = std::min(i1, nx_ - 1);
        if (j < 0 || k < 0 || j >= ny_ || k >= nz_ || i0 > i1) return;
        for (int i = i0; i <= i1; ++i) set(i, j, k);
    }

    /// Calls fn(i, j, k) for every set bit in (k, j, i) lexicographic order.
    template <class Fn>
    void for_each(Fn&& fn) const {
        for (int k = 0; k < nz_; ++k)
            for (int j = 0; j < ny_; ++j) {
                const std::uint64_t* row = &bits_[(static_cast<std::size_t>(k) * ny_ + j) * words_per_row_];
                for (int w = 0; w < words_per_row_; ++w) {
                    std::uint64_t bits = row[w];
                    while (bits) {
                        const int b = std::countr_zero(bits);
                        fn(w * 64 + b, j, k);
                        bits &= bits - 1;
                    }
                }
            }
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto w : bits_) n += static_cast<std::size_t>(std::popcount(w));
        return n;
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }

  private:
    std::uint64_t& word(int i, int j, int k) {
        return bits_[(static_cast<std::size_t>(k) * ny_ + j) * words_per_row_ + (i >> 6)];
    }
    const std::uint64_t& word(int i, int j, int k) const {
        return bits_[(static_cast<std::size_t>(k) * ny_ + j) * words_per_row_ + (i >> 6)];
    }

    int nx_ = 0, ny_ = 0, nz_ = 0, words_per_row_ = 0;
    std::vector<std::uint64_t> bits_;
};

struct SparseGrid {
    int resolution = 0;
    double band = kDefaultBand;  // narrow band in multiples of h
    Vec3 origin = Vec3::Constant(-1.0);

    std::vector<Vec3i> cubes;  // sorted by CornerKey
    std::vector<std::array<std::uint32_t, 8>> cube_corners;
    std::vector<Vec3i> corners;  // sorted by CornerKey
    std::vector<std::uint64_t> corner_keys;

    std::vector<double> udf;
    std::vector<std::uint32_t> closest_tri;  // argmin triangle of each corner's udf
    std::vector<std::uint8_t> sign;          // T: 0 exterior, 1 interior
    std::vector<double> phi;                 // empty until assembled
    std::vector<Vec3> delta;

    double h() const { return 2.0 / resolution; }
    double max_delta() const { return 0.5 * h(); }
    std::size_t cube_count() const { return cubes.size(); }
    std::size_t corner_count() const { return corners.size(); }

    Vec3 lattice_position(const Vec3i& c) const { return origin + h() * c.cast<double>(); }
    Vec3 corner_position(std::uint32_t ci) const { return lattice_position(corners[ci]); }
    Vec3 deformed_position(std::uint32_t ci) const { return corner_position(ci) + delta[ci]; }

    /// Writes a deformation, clamping every component to +-h/2.
    void set_delta(std::uint32_t ci, const Vec3& d) {
        const double m = max_delta();
        delta[ci] = d.cwiseMax(Vec3::Constant(-m)).cwiseMin(Vec3::Constant(m));
    }
};

/// Index of the corner with the given lattice key, if present.
inline std::optional<std::uint32_t> corner_index(const SparseGrid& grid, CornerKey key) {
    auto it = std::lower_bound(grid.corner_keys.begin(), grid.corner_keys.end(), key.value);
    if (it == grid.corner_keys.end() || *it != key.value) return std::nullopt;
    return static_cast<std::uint32_t>(it - grid.corner_keys.begin());
}

/// Cell of the lattice containing p (may lie outside [0, R)).
inline Vec3i cell_of(const SparseGrid& grid, const Vec3& p) {
    const Vec3 q = (p - grid.origin) / grid.h();
    return {static_cast<int>(std::floor(q[0])), static_cast<int>(std::floor(q[1])),
            static_cast<int>(std::floor(q[2]))};
}

namespace detail {

/// Fills corner_keys and cube_corners from the sorted cube and corner lists.
inline void index_grid(SparseGrid& grid) {
    grid.corner_keys.resize(grid.corners.size());
    for (std::size_t i = 0; i < grid.corners.size(); ++i) grid.corner_keys[i] = CornerKey::pack(grid.corners[i]).value;
    grid.cube_corners.resize(grid.cubes.size());
    std::atomic<bool> missing{false};
    parallel_for(0, grid.cubes.size(), [&](std::size_t c) {
        const Vec3i& base = grid.cubes[c];
        for (int k = 0; k < 8; ++k) {
            const auto idx = corner_index(grid, CornerKey::pack(base[0] + (k & 1), base[1] + ((k >> 1) & 1),
                                                                base[2] + ((k >> 2) & 1)));
            if (!idx) {
                missing = true;
                return;
            }
            grid.cube_corners[c][k] = *idx;
        }
    });
    if (missing) throw Error("sparse grid is missing a cube corner");
}

} // namespace detail

/// Grid over an explicit cube set (duplicates removed). Field arrays are
/// sized for the corners: udf 0, sign 0, delta 0, phi empty.
inline SparseGrid make_grid(int resolution, double band, std::vector<Vec3i> cubes) {
    SparseGrid grid;
    grid.resolution = resolution;
    grid.band = band;
    auto key = [](const Vec3i& c) { return CornerKey::pack(c).value; };
    for (const Vec3i& c : cubes)
        if ((c.array() < 0).any() || (c.array() >= resolution).any()) throw Error("cube outside the lattice");
    std::sort(cubes.begin(), cubes.end(), [&](const Vec3i& a, const Vec3i& b) { return key(a) < key(b); });
    cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
    grid.cubes = std::move(cubes);
    for (const Vec3i& c : grid.cubes)
        for (int k = 0; k < 8; ++k) grid.corners.emplace_back(c[0] + (k & 1), c[1] + ((k >> 1) & 1), c[2] + ((k >> 2) & 1));
    std::sort(grid.corners.begin(), grid.corners.end(), [&](const Vec3i& a, const Vec3i& b) { return key(a) < key(b); });
    grid.corners.erase(std::unique(grid.corners.begin(), grid.corners.end()), grid.corners.end());
    detail::index_grid(grid);
    const std::size_t n = grid.corners.size();
    grid.udf.assign(n, 0.0);
    grid.sign.assign(n, 0);
    grid.delta.assign(n, Vec3::Zero());
    return grid;
}

/// Step 1: collects every cube having a corner with udf < band * h.
///
/// Triangles are rasterized into the cells they touch, the candidate corner set
/// is the ceil(band)-ring around those cells, and the udf of each candidate
/// decides activity. The result equals a dense scan of all lattice corners.
inline SparseGrid extract_active_voxels(const Bvh& bvh, int resolution, double band = kDefaultBand) {
    if (resolution < kMinResolution || resolution > kMaxResolution)
        throw Error("resolution must lie in [64, 1024]");
    if (!(band >= 1.0)) throw Error("band must be at least 1.0");

    SparseGrid grid;
    grid.resolution = resolution;
    grid.band = band;
    const int R = resolution;
    const double h = grid.h();
    const double limit = band * h;
    const int ring = static_cast<int>(std::ceil(band));

    // Candidate corners: ring around every cell a triangle overlaps.
    LatticeBits candidates(R + 1, R + 1, R + 1);
    {
        const Vec3 half = Vec3::Constant(0.5 * h * (1.0 + 1e-9));
        for (std::uint32_t f = 0; f < bvh.triangle_count(); ++f) {
            const auto& t = bvh.triangle(f);
            Aabb tb;
            for (const Vec3& p : t) tb.extend(p);
            const Vec3i lo = cell_of(grid, tb.lo).cwiseMax(Vec3i::Zero());
            const Vec3i hi = cell_of(grid, tb.hi).cwiseMin(Vec3i::Constant(R - 1));
            for (int k = lo[2]; k <= hi[2]; ++k)
                for (int j = lo[1]; j <= hi[1]; ++j)
                    for (int i = lo[0]; i <= hi[0]; ++i) {
                        const Vec3 center = grid.lattice_position({i, j, k}) + Vec3::Constant(0.5 * h);
                        if (!triangle_box_overlap(center, half, t[0], t[1], t[2])) continue;
                        for (int dk = -ring; dk <= ring + 1; ++dk)
                            for (int dj = -ring; dj <= ring + 1; ++dj)
                                candidates.set_run(i - ring, i + 1 + ring, j + dj, k + dk);
                    }
        }
    }

    std::vector<Vec3i> cand;
    cand.reserve(candidates.count());
    candidates.for_each([&](int i, int j, int k) { cand.emplace_back(i, j, k); });
    std::vector<double> cand_udf(cand.size());
    std::vector<std::uint32_t> cand_tri(cand.size());
    parallel_for(0, cand.size(), [&](std::size_t c) {
        const UdfResult r = bvh.closest(grid.lattice_position(cand[c]));
        cand_udf[c] = r.distance;
        cand_tri[c] = r.tri;
    });

    LatticeBits active(R, R, R);
    for (std::size_t c = 0; c < cand.size(); ++c) {
        if (!(cand_udf[c] < limit)) continue;
        const Vec3i& x = cand[c];
        for (int k = 0; k < 8; ++k) {
            const Vec3i cube(x[0] - (k & 1), x[1] - ((k >> 1) & 1), x[2] - ((k >> 2) & 1));
            if (active.in_range(cube[0], cube[1], cube[2])) active.set(cube[0], cube[1], cube[2]);
        }
    }
    active.for_each([&](int i, int j, int k) { grid.cubes.emplace_back(i, j, k); });
    if (grid.cubes.empty()) throw Error("no active voxels: the surface is empty at this resolution");

    LatticeBits used(R + 1, R + 1, R + 1);
    for (const Vec3i& c : grid.cubes)
        for (int dk = 0; dk <= 1; ++dk)
            for (int dj = 0; dj <= 1; ++dj) used.set_run(c[0], c[0] + 1, c[1] + dj, c[2] + dk);
    grid.corners.reserve(used.count());
    used.for_each([&](int i, int j, int k) { grid.corners.emplace_back(i, j, k); });
    detail::index_grid(grid);

    // Reuse candidate distances (both lists are key-sorted); compute the rest.
    const std::size_t n = grid.corners.size();
    grid.udf.assign(n, -1.0);
    grid.closest_tri.assign(n, 0);
    {
        std::size_t c = 0;
        for (std::size_t v = 0; v < n; ++v) {
            const std::uint64_t key = grid.corner_keys[v];
            while (c < cand.size() && CornerKey::pack(cand[c]).value < key) ++c;
            if (c < cand.size() && CornerKey::pack(cand[c]).value == key) {
                grid.udf[v] = cand_udf[c];
                grid.closest_tri[v] = cand_tri[c];
            }
        }
    }
    parallel_for(0, n, [&](std::size_t v) {
        if (grid.udf[v] >= 0.0) return;
        const UdfResult r = bvh.closest(grid.corner_position(static_cast<std::uint32_t>(v)));
        grid.udf[v] = r.distance;
        grid.closest_tri[v] = r.tri;
    });
    grid.sign.assign(n, 0);
    grid.phi.clear();
    grid.delta.assign(n, Vec3::Zero());
    return grid;
}

// ---------------------------------------------------------------------------
// SPC3 binary format (little-endian):
//   "SPC3" u32 version=1, u32 R, u32 band_millis, u64 n_cubes, u64 n_corners,
//   n_cubes x 3 i32, n_cubes x 8 u64, n_corners x 3 i32, n_corners x f32 phi,
//   n_corners x 3 f32 delta.

inline constexpr std::uint32_t kSpc3Version = 1;

inline void write_spc3(const SparseGrid& grid, std::ostream& out) {
    if (grid.phi.size() != grid.corners.size()) throw Error("cannot serialize a grid without assembled phi");
    out.write("SPC3", 4);
    detail::write_le<std::uint32_t>(out, kSpc3Version);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.resolution));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(std::lround(grid.band * 1000.0)));
    detail::write_le<std::uint64_t>(out, grid.cubes.size());
    detail::write_le<std::uint64_t>(out, grid.corners.size());
    for (const Vec3i& c : grid.cubes)
        for (int k = 0; k < 3; ++k) detail::write_le<std::int32_t>(out, c[k]);
    for (const auto& cc : grid.cube_corners)
        for (auto i : cc) detail::write_le<std::uint64_t>(out, i);
    for (const Vec3i& c : grid.corners)
        for (int k = 0; k < 3; ++k) detail::write_le<std::int32_t>(out, c[k]);
    for (double p : grid.phi) detail::write_le<float>(out, static_cast<float>(p));
    for (const Vec3& d : grid.delta)
        for (int k = 0; k < 3; ++k) detail::write_le<float>(out, static_cast<float>(d[k]));
}

inline void write_spc3(const SparseGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    write_spc3(grid, out);
    if (!out) throw Error("failed writing " + path.string());
}

/// Reads an SPC3 stream. udf and sign are reconstructed from phi
/// (udf = |phi|, sign = signbit(phi)); closest_tri is left empty.
inline SparseGrid read_spc3(std::istream& in) {
    auto read = [&](auto& v) {
        char buf[sizeof(v)];
        if (!in.read(buf, sizeof(v))) throw Error("truncated SPC3 stream");
        v = detail::read_le<std::remove_reference_t<decltype(v)>>(buf);
    };
    char magic[4];
    if (!in.read(magic, 4) || std::string_view(magic, 4) != "SPC3") throw Error("not an SPC3 file (bad magic)");
    std::uint32_t version = 0, res = 0, band_millis = 0;
    read(version);
    if (version != kSpc3Version) throw Error("unsupported SPC3 version " + std::to_string(version));
    read(res);
    read(band_millis);
    std::uint64_t n_cubes = 0, n_corners = 0;
    read(n_cubes);
    read(n_corners);
    if (n_corners > (1ull << 32) || n_cubes > (1ull << 32)) throw Error("SPC3 counts out of range");

    SparseGrid grid;
    grid.resolution = static_cast<int>(res);
    grid.band = band_millis / 1000.0;
    grid.cubes.resize(n_cubes);
    grid.cube_corners.resize(n_cubes);
    grid.corners.resize(n_corners);
    for (auto& c : grid.cubes)
        for (int k = 0; k < 3; ++k) {
            std::int32_t v;
            read(v);
            c[k] = v;
        }
    for (auto& cc : grid.cube_corners)
        for (auto& i : cc) {
            std::uint64_t v;
            read(v);
            if (v >= n_corners) throw Error("SPC3 cube references a missing corner");
            i = static_cast<std::uint32_t>(v);
        }
    for (auto& c : grid.corners)
        for (int k = 0; k < 3; ++k) {
            std::int32_t v;
            read(v);
            c[k] = v;
        }
    grid.phi.resize(n_corners);
    for (auto& p : grid.phi) {
        float v;
        read(v);
        p = v;
    }
    grid.delta.resize(n_corners);
    for (auto& d : grid.delta)
        for (int k = 0; k < 3; ++k) {
            float v;
            read(v);
            d[k] = v;
        }
    grid.corner_keys.resize(n_corners);
    for (std::size_t i = 0; i < n_corners; ++i) grid.corner_keys[i] = CornerKey::pack(grid.corners[i]).value;
    grid.udf.resize(n_corners);
    grid.sign.resize(n_corners);
    for (std::size_t i = 0; i < n_corners; ++i) {
        grid.udf[i] = std::abs(grid.phi[i]);
        grid.sign[i] = std::signbit(grid.phi[i]) ? 1 : 0;
    }
    return grid;
}

inline SparseGrid read_spc3(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return read_spc3(in);
}

} // namespace sparcubes

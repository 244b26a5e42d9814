#pragma once

// Inside/outside labelling of the sparse grid.
//
// Every active cube blocks the flood fill. Free cells reached from outside the
// lattice are exterior; unreached free cells (enclosed pockets) are interior.
// A corner is exterior when any incident cell is exterior, so corners buried
// in the narrow band start out interior. refine_signs then revisits those
// buried corners by stepping along the udf gradient until a labelled cell is
// found on either side of the nearest surface.

#include <cmath>

#include "bvh.hpp"
#include "sparse_grid.hpp"

namespace sparcubes {

enum class CellLabel : std::uint8_t { Exterior, Interior, Blocked };

/// Occupancy over the R^3 cells: blocked = active cube, reached = exterior free cell.
/// Cells outside the lattice count as exterior.
class OccupancyMask {
  public:
    OccupancyMask() = default;
    explicit OccupancyMask(int resolution)
        : resolution_(resolution), blocked_(resolution, resolution, resolution),
          reached_(resolution, resolution, resolution) {}

    int resolution() const { return resolution_; }
    bool inside(int i, int j, int k) const { return blocked_.in_range(i, j, k); }
    bool blocked(int i, int j, int k) const { return inside(i, j, k) && blocked_.test(i, j, k); }
    bool reached(int i, int j, int k) const { return !inside(i, j, k) || reached_.test(i, j, k); }

    CellLabel label(int i, int j, int k) const {
        if (!inside(i, j, k)) return CellLabel::Exterior;
        if (blocked_.test(i, j, k)) return CellLabel::Blocked;
        return reached_.test(i, j, k) ? CellLabel::Exterior : CellLabel::Interior;
    }
    CellLabel label(const Vec3i& c) const { return label(c[0], c[1], c[2]); }

    /// 0 if any of the eight cells around lattice corner c is exterior, else 1.
    std::uint8_t corner_label(const Vec3i& c) const {
        for (int k = 0; k < 8; ++k)
            if (reached(c[0] - (k & 1), c[1] - ((k >> 1) & 1), c[2] - ((k >> 2) & 1))) return 0;
        return 1;
    }

    /// True when all eight cells around corner c lie in the lattice and are blocked.
    bool corner_buried(const Vec3i& c) const {
        for (int k = 0; k < 8; ++k)
            if (!blocked(c[0] - (k & 1), c[1] - ((k >> 1) & 1), c[2] - ((k >> 2) & 1))) return false;
        return true;
    }

    std::size_t reached_count() const { return reached_.count(); }
    std::size_t blocked_count() const { return blocked_.count(); }

    LatticeBits& blocked_bits() { return blocked_; }
    LatticeBits& reached_bits() { return reached_; }

  private:
    int resolution_ = 0;
    LatticeBits blocked_, reached_;
};

namespace detail {

inline std::uint32_t pack_cell(int i, int j, int k, int R) {
    return static_cast<std::uint32_t>(i + R * (j + static_cast<std::size_t>(R) * k));
}

/// 6-connected breadth-first fill over free cells starting from `frontier`
/// (already marked reached). Returns the number of cells visited.
inline std::size_t bfs(OccupancyMask& mask, std::vector<std::uint32_t> frontier) {
    const int R = mask.resolution();
    LatticeBits& reached = mask.reached_bits();
    LatticeBits& blocked = mask.blocked_bits();
    std::size_t visited = frontier.size();
    std::vector<std::uint32_t> next;
    static constexpr int kSteps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    while (!frontier.empty()) {
        next.clear();
        for (std::uint32_t id : frontier) {
            const int i = static_cast<int>(id % R), j = static_cast<int>((id / R) % R),
                      k = static_cast<int>(id / (static_cast<std::uint32_t>(R) * R));
            for (const auto& s : kSteps) {
                const int a = i + s[0], b = j + s[1], c = k + s[2];
                if (!blocked.in_range(a, b, c) || blocked.test(a, b, c)) continue;
                if (reached.test_and_set(a, b, c)) {
                    next.push_back(pack_cell(a, b, c, R));
                    ++visited;
                }
            }
        }
        frontier.swap(next);
    }
    return visited;
}

} // namespace detail

/// Marks the active cubes of `grid` as blocked cells.
inline OccupancyMask build_occupancy(const SparseGrid& grid) {
    OccupancyMask mask(grid.resolution);
    for (const Vec3i& c : grid.cubes) mask.blocked_bits().set(c[0], c[1], c[2]);
    return mask;
}

/// Step 2: flood fill from outside the lattice through free cells (6-connected),
/// then writes the per-corner labels into grid.sign.
///
/// A free cell next to the band that is unreached but shares a lattice corner
/// with an exterior cell is promoted to exterior (and filled from); otherwise
/// such a cell would carry mixed corner labels on the boundary of the active
/// region and the extraction would crack there.
inline OccupancyMask flood_fill(SparseGrid& grid) {
    OccupancyMask mask = build_occupancy(grid);
    const int R = grid.resolution;

    std::vector<std::uint32_t> seeds;
    auto seed = [&](int i, int j, int k) {
        if (!mask.blocked_bits().test(i, j, k) && mask.reached_bits().test_and_set(i, j, k))
            seeds.push_back(detail::pack_cell(i, j, k, R));
    };
    for (int a = 0; a < R; ++a)
        for (int b = 0; b < R; ++b) {
            seed(0, a, b), seed(R - 1, a, b);
            seed(a, 0, b), seed(a, R - 1, b);
            seed(a, b, 0), seed(a, b, R - 1);
        }
    detail::bfs(mask, std::move(seeds));

    static constexpr int kFaces[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (;;) {
        std::vector<std::uint32_t> promoted;
        for (const Vec3i& c : grid.cubes)
            for (const auto& s : kFaces) {
                const Vec3i n(c[0] + s[0], c[1] + s[1], c[2] + s[2]);
                if (mask.label(n) != CellLabel::Interior) continue;
                bool touches = false;
                for (int k = 0; k < 8 && !touches; ++k) {
                    const Vec3i corner(n[0] + (k & 1), n[1] + ((k >> 1) & 1), n[2] + ((k >> 2) & 1));
                    touches = mask.corner_label(corner) == 0;
                }
                if (touches && mask.reached_bits().test_and_set(n[0], n[1], n[2]))
                    promoted.push_back(detail::pack_cell(n[0], n[1], n[2], R));
            }
        if (promoted.empty()) break;
        detail::bfs(mask, std::move(promoted));
    }

    grid.sign.resize(grid.corners.size());
    parallel_for(0, grid.corners.size(), [&](std::size_t v) { grid.sign[v] = mask.corner_label(grid.corners[v]); });
    return mask;
}

/// phi = (1 - 2T) * udf. Interior corners with udf = 0 get -0.0, which the
/// extraction's tie rule reads as interior.
inline void assemble_sdf(SparseGrid& grid) {
    if (grid.sign.size() != grid.corners.size() || grid.udf.size() != grid.corners.size())
        throw Error("assemble_sdf needs udf and sign labels for every corner");
    grid.phi.resize(grid.corners.size());
    for (std::size_t v = 0; v < grid.corners.size(); ++v)
        grid.phi[v] = static_cast<double>(1 - 2 * static_cast<int>(grid.sign[v])) * grid.udf[v];
}

struct SignRefineConfig {
    double eta = 0.0;                 // gradient step, absolute length (pipeline default: 1.0 * h)
    double sheet_half_width = 1.0;    // open-sheet shell half thickness, multiples of h
};

struct SignRefineReport {
    std::size_t ambiguous = 0;
    std::size_t flipped_to_exterior = 0;
    std::size_t open_sheet = 0;       // both sides of the nearest surface read exterior
    std::size_t undecided = 0;        // forward probe never reached a labelled cell
    std::size_t bubbles = 0;          // interior corners dropped as isolated bubbles
    std::vector<std::uint8_t> ambiguous_flags;
};

inline constexpr std::size_t kMaxBubbleCorners = 2;

enum class ProbeResult : std::uint8_t { Exterior, Interior, Unknown };

/// Steps x_k = start + k * eta * dir until a non-blocked cell is hit or the
/// travelled distance exceeds max_dist.
inline ProbeResult probe_label(const SparseGrid& grid, const OccupancyMask& mask, const Vec3& start,
                               const Vec3& dir, double eta, double max_dist) {
    if (!(eta > 0.0)) return ProbeResult::Unknown;
    for (int k = 1;; ++k) {
        const double s = k * eta;
        if (s > max_dist) return ProbeResult::Unknown;
        switch (mask.label(cell_of(grid, start + s * dir))) {
        case CellLabel::Exterior: return ProbeResult::Exterior;
        case CellLabel::Interior: return ProbeResult::Interior;
        case CellLabel::Blocked: break;
        }
    }
}

/// Sign refinement for corners the flood fill could not see.
///
/// A corner is ambiguous when it is labelled interior only because every cell
/// around it is blocked. For such a corner x with distance u and gradient g,
/// the forward probe walks x + k*eta*g (its own side of the nearest surface)
/// and the backward probe walks x - k*eta*g (through the surface):
///   forward interior                 -> interior
///   forward exterior, back interior  -> exterior (closed surface, outer side)
///   forward exterior, back exterior  -> open sheet: interior iff u <= sheet_half_width * h
///   forward exterior, back unknown   -> exterior
///   forward unknown                  -> unchanged
/// Afterwards, buried corners that end up interior are grouped 6-connected.
/// A group of at most kMaxBubbleCorners corners that touches no other
/// interior corner is made exterior; such groups appear along rims and
/// self-intersection creases and would close into isolated bubbles.
/// Magnitudes |phi| are preserved.
inline SignRefineReport refine_signs(SparseGrid& grid, const Bvh& bvh, const OccupancyMask& mask,
                                     const SignRefineConfig& cfg) {
    if (grid.phi.size() != grid.corners.size()) throw Error("refine_signs needs an assembled phi");
    SignRefineReport report;
    const std::size_t n = grid.corners.size();
    report.ambiguous_flags.assign(n, 0);
    if (!(cfg.eta > 0.0)) return report;

    const double h = grid.h();
    const double reach = (grid.band + std::sqrt(3.0)) * h + cfg.eta;
    const bool have_tri = grid.closest_tri.size() == n;

    enum : std::uint8_t { kKeep, kExterior, kSheetInterior, kSheetExterior, kUndecided, kBubble };
    std::vector<std::uint8_t> verdict(n, kKeep);
    parallel_for(0, n, [&](std::size_t v) {
        if (grid.sign[v] != 1 || !mask.corner_buried(grid.corners[v])) return;
        report.ambiguous_flags[v] = 1;
        const double u = grid.udf[v];
        if (u <= kGradientEpsilon) return;
        const Vec3 x = grid.corner_position(static_cast<std::uint32_t>(v));
        Vec3 closest;
        if (have_tri) {
            const auto& t = bvh.triangle(grid.closest_tri[v]);
            closest = closest_point_on_triangle(x, t[0], t[1], t[2]);
        } else {
            closest = bvh.closest(x).closest;
        }
        const Vec3 g = (x - closest) / u;

        const ProbeResult fwd = probe_label(grid, mask, x, g, cfg.eta, reach - u);
        if (fwd == ProbeResult::Interior) return;
        if (fwd == ProbeResult::Unknown) {
            verdict[v] = kUndecided;
            return;
        }
        const ProbeResult back = probe_label(grid, mask, x, -g, cfg.eta, reach + u);
        if (back == ProbeResult::Exterior)
            verdict[v] = u <= cfg.sheet_half_width * h ? kSheetInterior : kSheetExterior;
        else
            verdict[v] = kExterior;
    });

    auto interior_after = [&](std::uint32_t v) {
        return verdict[v] == kKeep || verdict[v] == kUndecided ? grid.sign[v] == 1 : verdict[v] == kSheetInterior;
    };
    detail::DisjointSets groups(n);
    std::vector<std::uint8_t> anchored(n, 0);
    static constexpr int kNeighbours[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (std::uint32_t v = 0; v < n; ++v) {
        if (!report.ambiguous_flags[v] || !interior_after(v)) continue;
        const Vec3i& c = grid.corners[v];
        for (const auto& s : kNeighbours) {
            const auto idx = corner_index(grid, CornerKey::pack(c[0] + s[0], c[1] + s[1], c[2] + s[2]));
            if (!idx || !interior_after(*idx)) continue;
            if (report.ambiguous_flags[*idx])
                groups.unite(v, *idx);
            else
                anchored[v] = 1;
        }
    }
    std::vector<std::uint32_t> group_size(n, 0);
    for (std::uint32_t v = 0; v < n; ++v) {
        if (!report.ambiguous_flags[v] || !interior_after(v)) continue;
        const std::uint32_t root = groups.find(v);
        ++group_size[root];
        anchored[root] |= anchored[v];
    }
    for (std::uint32_t v = 0; v < n; ++v) {
        if (!report.ambiguous_flags[v] || !interior_after(v)) continue;
        const std::uint32_t root = groups.find(v);
        if (anchored[root] || group_size[root] > kMaxBubbleCorners) continue;
        ++report.bubbles;
        verdict[v] = kBubble;
    }

    for (std::size_t v = 0; v < n; ++v) {
        report.ambiguous += report.ambiguous_flags[v];
        switch (verdict[v]) {
        case kSheetInterior: ++report.open_sheet; break;
        case kSheetExterior: ++report.open_sheet; [[fallthrough]];
        case kExterior:
        case kBubble:
            grid.sign[v] = 0;
            grid.phi[v] = grid.udf[v];
            ++report.flipped_to_exterior;
            break;
        case kUndecided: ++report.undecided; break;
        default: break;
        }
    }
    return report;
}

} // namespace sparcubes

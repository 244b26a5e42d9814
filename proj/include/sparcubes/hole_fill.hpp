#pragma once

// Boundary loop recovery and ear-clipping hole filling.
//
// Boundary edges are directed face edges whose undirected edge occurs once.
// Loops are walked through an outgoing-edge map keyed by source vertex. Each
// loop is closed by repeatedly clipping the vertex with the smallest turning
// score A_i = atan2(|d_in x d_out|, -d_in . d_out) over unit directions.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "mesh_io.hpp"
#include "parallel.hpp"

namespace sparcubes {

struct BoundaryLoop {
    std::vector<std::uint32_t> vertices;  // v_1 ... v_n, closing back to v_1
    std::size_t size() const { return vertices.size(); }
};

struct LoopDefect {
    std::uint32_t start = 0;
    std::size_t edges = 0;  // boundary edges consumed by the open walk
};

struct BoundaryLoops {
    std::vector<BoundaryLoop> loops;
    std::vector<LoopDefect> defects;
    std::size_t branching_vertices = 0;  // vertices with several outgoing boundary edges
    std::size_t boundary_edges = 0;
};

/// Directed boundary edges (v_k -> v_k+1 as they occur in faces), sorted.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> boundary_edges(const TriMesh& mesh) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<int, std::pair<std::uint32_t, std::uint32_t>>> count;
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const std::uint32_t a = f[k], b = f[(k + 1) % 3];
            auto& e = count[std::minmax(a, b)];
            ++e.first;
            e.second = {a, b};
        }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (const auto& [key, e] : count)
        if (e.first == 1) out.push_back(e.second);
    std::sort(out.begin(), out.end());
    return out;
}

inline BoundaryLoops find_boundary_loops(const TriMesh& mesh, Diagnostics* diag = nullptr) {
    BoundaryLoops result;
    const auto edges = boundary_edges(mesh);
    result.boundary_edges = edges.size();

    // Outgoing edges per source vertex, targets ascending.
    std::map<std::uint32_t, std::vector<std::uint32_t>> outgoing;
    for (const auto& [a, b] : edges) outgoing[a].push_back(b);
    for (const auto& [v, targets] : outgoing)
        if (targets.size() > 1) {
            ++result.branching_vertices;
            warn(diag, "boundary vertex " + std::to_string(v) + " has " + std::to_string(targets.size()) +
                           " outgoing boundary edges; taking the smallest target");
        }
    std::map<std::uint32_t, std::size_t> next_slot;

    for (const auto& [start, first_target] : edges) {
        // Targets at a vertex are consumed in ascending order, and edges are
        // visited in that same order, so the edge is used iff its slot is passed.
        const auto& starts = outgoing[start];
        const auto pos = static_cast<std::size_t>(std::lower_bound(starts.begin(), starts.end(), first_target) - starts.begin());
        if (pos < next_slot[start]) continue;
        BoundaryLoop loop;
        std::uint32_t v = start;
        std::size_t consumed = 0;
        bool closed = false;
        for (;;) {
            auto it = outgoing.find(v);
            if (it == outgoing.end() || next_slot[v] >= it->second.size()) break;
            const std::uint32_t to = it->second[next_slot[v]++];
            loop.vertices.push_back(v);
            ++consumed;
            v = to;
            if (v == start) {
                closed = true;
                break;
            }
        }
        if (closed && loop.size() >= 3) {
            result.loops.push_back(std::move(loop));
        } else {
            result.defects.push_back({start, consumed});
            warn(diag, "boundary walk from vertex " + std::to_string(start) + " did not close after " +
                           std::to_string(consumed) + " edges");
        }
    }
    return result;
}

struct EarScore {
    double angle = 0.0;
    bool degenerate = false;
};

/// Turning score at `cur` in [0, pi]; straight continuation scores pi, a full
/// reversal 0. A zero-length direction scores 0 and is flagged degenerate.
inline EarScore ear_score(const Vec3& prev, const Vec3& cur, const Vec3& next) {
    const Vec3 a = cur - prev, b = next - cur;
    const double la = a.norm(), lb = b.norm();
    if (!(la > 0.0) || !(lb > 0.0)) return {0.0, true};
    const Vec3 d1 = a / la, d2 = b / lb;
    return {std::atan2(d1.cross(d2).norm(), -d1.dot(d2)), false};
}

inline double ear_angle(const Vec3& prev, const Vec3& cur, const Vec3& next) { return ear_score(prev, cur, next).angle; }

struct LoopFill {
    std::vector<Face> faces;
    std::size_t degenerate_ears = 0;
};

/// Clips the loop down to a triangle, n - 2 faces in total. Faces are wound
/// against the loop direction so they agree with the faces that border it.
inline LoopFill fill_loop(const BoundaryLoop& loop, const std::vector<Vec3>& vertices) {
    LoopFill out;
    std::vector<std::uint32_t> ring = loop.vertices;
    const std::size_t n = ring.size();
    if (n < 3) return out;
    out.faces.reserve(n - 2);

    std::vector<EarScore> score(n);
    auto eval = [&](std::size_t i) {
        const std::size_t m = ring.size();
        return ear_score(vertices[ring[(i + m - 1) % m]], vertices[ring[i]], vertices[ring[(i + 1) % m]]);
    };
    for (std::size_t i = 0; i < n; ++i) score[i] = eval(i);

    while (ring.size() > 3) {
        const std::size_t m = ring.size();
        std::size_t best = 0;
        for (std::size_t i = 1; i < m; ++i)
            if (score[i].angle < score[best].angle || (score[i].angle == score[best].angle && ring[i] < ring[best]))
                best = i;
        if (score[best].degenerate) ++out.degenerate_ears;
        const std::size_t prev = (best + m - 1) % m, next = (best + 1) % m;
        out.faces.push_back({ring[next], ring[best], ring[prev]});
        ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(best));
        score.erase(score.begin() + static_cast<std::ptrdiff_t>(best));
        const std::size_t mm = ring.size();
        const std::size_t p = best == 0 ? mm - 1 : best - 1, q = best % mm;
        score[p] = eval(p);
        score[q] = eval(q);
    }
    out.faces.push_back({ring[2], ring[1], ring[0]});
    return out;
}

struct HoleFillReport {
    std::size_t loops = 0;
    std::size_t filled = 0;
    std::size_t skipped = 0;
    std::size_t defects = 0;
    std::size_t degenerate_ears = 0;
    std::size_t faces_added = 0;
    std::vector<std::size_t> filled_lengths;
    std::vector<std::size_t> skipped_lengths;

    std::string to_text() const {
        std::ostringstream out;
        out << "{loops: " << loops << ", filled: " << filled << ", skipped: " << skipped << ", defects: " << defects
            << ", degenerate_ears: " << degenerate_ears << ", faces_added: " << faces_added << ", filled_lengths: [";
        for (std::size_t i = 0; i < filled_lengths.size(); ++i) out << (i ? ", " : "") << filled_lengths[i];
        out << "], skipped_lengths: [";
        for (std::size_t i = 0; i < skipped_lengths.size(); ++i) out << (i ? ", " : "") << skipped_lengths[i];
        out << "]}";
        return out.str();
    }
};

inline constexpr std::size_t kDefaultMaxLoop = 64;
inline constexpr std::size_t kUnlimitedLoop = std::numeric_limits<std::size_t>::max();

/// Fills every loop with at most max_loop vertices; larger loops are reported.
inline TriMesh fill_all_holes(const TriMesh& mesh, std::size_t max_loop = kDefaultMaxLoop,
                              HoleFillReport* report = nullptr, Diagnostics* diag = nullptr) {
    const BoundaryLoops found = find_boundary_loops(mesh, diag);
    std::vector<LoopFill> fills(found.loops.size());
    parallel_for(0, found.loops.size(), [&](std::size_t i) {
        if (found.loops[i].size() <= max_loop) fills[i] = fill_loop(found.loops[i], mesh.vertices);
    }, 1);

    TriMesh out = mesh;
    HoleFillReport rep;
    rep.loops = found.loops.size();
    rep.defects = found.defects.size();
    for (std::size_t i = 0; i < found.loops.size(); ++i) {
        if (found.loops[i].size() > max_loop) {
            ++rep.skipped;
            rep.skipped_lengths.push_back(found.loops[i].size());
            warn(diag, "hole with " + std::to_string(found.loops[i].size()) + " boundary vertices left open");
            continue;
        }
        ++rep.filled;
        rep.filled_lengths.push_back(found.loops[i].size());
        rep.degenerate_ears += fills[i].degenerate_ears;
        rep.faces_added += fills[i].faces.size();
        out.faces.insert(out.faces.end(), fills[i].faces.begin(), fills[i].faces.end());
    }
    if (rep.degenerate_ears) warn(diag, std::to_string(rep.degenerate_ears) + " degenerate ears clipped during hole filling");
    if (report) *report = rep;
    return out;
}

} // namespace sparcubes

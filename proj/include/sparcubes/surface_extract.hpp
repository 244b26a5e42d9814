#pragma once

// Sparse marching cubes over the deformed grid (V + dV, C, phi).
//
// One vertex per crossed lattice edge, shared by every cube around that edge,
// so cubes that share a face stitch exactly. The interpolation parameter t
// uses the undeformed phi values; deformation only moves the edge endpoints:
//   p = (1 - t) (v_a + d_a) + t (v_b + d_b),   t = phi_a / (phi_a - phi_b).
// A corner with phi == 0 is read as +1e-10, or -1e-10 when phi is -0.0
// (an interior corner sitting on the surface). t is kept within
// [kMinEdgeT, 1 - kMinEdgeT] so vertices never coincide with a corner and no
// triangle collapses to zero area.

#include <algorithm>

#include "mc_table.hpp"
#include "mesh_io.hpp"
#include "parallel.hpp"
#include "sparse_grid.hpp"

namespace sparcubes {

inline constexpr double kZeroTie = 1e-10;
inline constexpr double kMinEdgeT = 1e-3;

inline double edge_t(double phi_a, double phi_b) {
    return std::clamp(phi_a / (phi_a - phi_b), kMinEdgeT, 1.0 - kMinEdgeT);
}

/// phi with the zero tie broken by its sign bit.
inline double tie_broken(double phi) {
    if (phi != 0.0) return phi;
    return std::signbit(phi) ? -kZeroTie : kZeroTie;
}

/// Order-independent key of a lattice edge between two corner indices.
struct EdgeKey {
    std::uint32_t lo = 0, hi = 0;
    EdgeKey() = default;
    EdgeKey(std::uint32_t a, std::uint32_t b) : lo(std::min(a, b)), hi(std::max(a, b)) {}
    auto operator<=>(const EdgeKey&) const = default;
};

/// Per extracted vertex: the source edge (a is the lower lattice corner) and t.
struct ExtractionJacobian {
    std::vector<std::uint32_t> corner_a, corner_b;
    std::vector<double> t;
    std::vector<double> phi_a, phi_b;  // tie-broken values used for t
    std::vector<Vec3> q_a, q_b;        // deformed endpoint positions

    std::size_t size() const { return t.size(); }
};

struct VertexPartials {
    Vec3 dp_dphi_a = Vec3::Zero();
    Vec3 dp_dphi_b = Vec3::Zero();
    double dp_ddelta_a = 0.0;  // dp/d(delta_a) = dp_ddelta_a * I
    double dp_ddelta_b = 0.0;
};

inline VertexPartials vertex_jacobian(const ExtractionJacobian& jac, std::size_t v) {
    const double pa = jac.phi_a[v], pb = jac.phi_b[v];
    const double denom = (pa - pb) * (pa - pb);
    const Vec3 edge = jac.q_b[v] - jac.q_a[v];
    VertexPartials out;
    const double t = jac.t[v];
    if (t > kMinEdgeT && t < 1.0 - kMinEdgeT) {
        out.dp_dphi_a = (-pb / denom) * edge;
        out.dp_dphi_b = (pa / denom) * edge;
    }
    out.dp_ddelta_a = 1.0 - jac.t[v];
    out.dp_ddelta_b = jac.t[v];
    return out;
}

/// Connectivity of the extracted surface; fixed while phi is fixed.
struct ExtractionTopology {
    std::vector<std::uint32_t> corner_a, corner_b;
    std::vector<double> t;
    std::vector<Face> faces;
    std::vector<std::uint32_t> face_cube;  // cube that emitted each face
    std::size_t ambiguous_cubes = 0;

    std::size_t vertex_count() const { return t.size(); }
    EdgeKey edge(std::size_t v) const { return {corner_a[v], corner_b[v]}; }
};

inline int cube_case(const SparseGrid& grid, std::size_t cube) {
    int code = 0;
    for (int k = 0; k < 8; ++k)
        if (tie_broken(grid.phi[grid.cube_corners[cube][k]]) < 0.0) code |= 1 << k;
    return code;
}

inline ExtractionTopology extract_topology(const SparseGrid& grid) {
    if (grid.phi.size() != grid.corners.size()) throw Error("marching cubes needs an assembled phi");
    const std::size_t n_corners = grid.corners.size();
    ExtractionTopology topo;

    std::vector<int> cases(grid.cubes.size());
    parallel_for(0, grid.cubes.size(), [&](std::size_t c) { cases[c] = cube_case(grid, c); });

    // slot[3 * a + axis] = vertex on the edge leaving corner a along axis.
    std::vector<std::uint32_t> slot(3 * n_corners, UINT32_MAX);
    for (std::size_t c = 0; c < grid.cubes.size(); ++c) {
        const int code = cases[c];
        if (code == 0 || code == 255) continue;
        if (mc::kAmbiguousCase[code]) ++topo.ambiguous_cubes;
        const auto& cc = grid.cube_corners[c];
        const auto& row = mc::kTriTable[code];
        for (int i = 0; row[i] >= 0; i += 3) {
            Face f;
            for (int k = 0; k < 3; ++k) {
                const int e = row[i + k];
                const std::uint32_t a = cc[mc::kEdgeCorners[e][0]], b = cc[mc::kEdgeCorners[e][1]];
                if (a >= n_corners || b >= n_corners) throw Error("cube references a missing corner");
                std::uint32_t& s = slot[3 * static_cast<std::size_t>(a) + e / 4];
                if (s == UINT32_MAX) {
                    s = static_cast<std::uint32_t>(topo.t.size());
                    const double pa = tie_broken(grid.phi[a]), pb = tie_broken(grid.phi[b]);
                    topo.corner_a.push_back(a);
                    topo.corner_b.push_back(b);
                    topo.t.push_back(edge_t(pa, pb));
                }
                f[k] = s;
            }
            topo.faces.push_back(f);
            topo.face_cube.push_back(static_cast<std::uint32_t>(c));
        }
    }
    return topo;
}

/// Vertex positions of `topo` under the grid's current deformation.
inline std::vector<Vec3> vertex_positions(const SparseGrid& grid, const ExtractionTopology& topo) {
    std::vector<Vec3> pos(topo.vertex_count());
    parallel_for(0, pos.size(), [&](std::size_t v) {
        const double t = topo.t[v];
        pos[v] = (1.0 - t) * grid.deformed_position(topo.corner_a[v]) + t * grid.deformed_position(topo.corner_b[v]);
    });
    return pos;
}

inline ExtractionJacobian extraction_jacobian(const SparseGrid& grid, const ExtractionTopology& topo) {
    ExtractionJacobian jac;
    jac.corner_a = topo.corner_a;
    jac.corner_b = topo.corner_b;
    jac.t = topo.t;
    const std::size_t n = topo.vertex_count();
    jac.phi_a.resize(n);
    jac.phi_b.resize(n);
    jac.q_a.resize(n);
    jac.q_b.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
        jac.phi_a[v] = tie_broken(grid.phi[topo.corner_a[v]]);
        jac.phi_b[v] = tie_broken(grid.phi[topo.corner_b[v]]);
        jac.q_a[v] = grid.deformed_position(topo.corner_a[v]);
        jac.q_b[v] = grid.deformed_position(topo.corner_b[v]);
    }
    return jac;
}

struct ExtractionResult {
    TriMesh mesh;
    ExtractionJacobian jacobian;
    std::vector<std::uint32_t> face_cube;
    std::size_t ambiguous_cubes = 0;
};

/// Zero isosurface of the grid. Triangles are wound with normals pointing
/// toward positive phi (the exterior).
inline ExtractionResult marching_cubes(const SparseGrid& grid) {
    ExtractionTopology topo = extract_topology(grid);
    ExtractionResult out;
    out.mesh.vertices = vertex_positions(grid, topo);
    out.mesh.faces = topo.faces;
    out.jacobian = extraction_jacobian(grid, topo);
    out.face_cube = std::move(topo.face_cube);
    out.ambiguous_cubes = topo.ambiguous_cubes;
    return out;
}

} // namespace sparcubes

#pragma once

// Bounding-volume hierarchy over mesh triangles answering exact
// point-to-surface distance queries.
//
// Built by median split of triangle centroids along the widest centroid axis,
// ties broken by triangle index, leaves of at most four triangles. Nodes are
// stored in depth-first order (left child directly follows its parent).

#include <algorithm>
#include <numeric>
#include <optional>

#include "common.hpp"
#include "geometry.hpp"
#include "mesh_io.hpp"

namespace sparcubes {

struct UdfResult {
    double distance = 0.0;
    Vec3 closest = Vec3::Zero();
    std::uint32_t tri = 0;
};

/// Gradient of the unsigned distance; `defined` is false on the surface itself.
struct UdfGradient {
    Vec3 direction = Vec3::Zero();
    bool defined = false;
};

inline constexpr double kGradientEpsilon = 1e-8;

class Bvh {
  public:
    static constexpr std::uint32_t kLeafSize = 4;

    struct Node {
        Aabb box;
        std::uint32_t first = 0;  // leaf: first slot in tri_order
        std::uint32_t count = 0;  // leaf: triangle count, 0 for inner nodes
        std::uint32_t right = 0;  // inner: index of the right child
    };

    Bvh() = default;

    explicit Bvh(const TriMesh& mesh) {
        if (mesh.faces.empty()) throw Error("cannot build a BVH over an empty mesh");
        check_mesh(mesh);
        const std::size_t n = mesh.faces.size();
        corners_.resize(n);
        std::vector<Vec3> centroids(n);
        for (std::size_t f = 0; f < n; ++f) {
            const Face& t = mesh.faces[f];
            corners_[f] = {mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]};
            centroids[f] = (corners_[f][0] + corners_[f][1] + corners_[f][2]) / 3.0;
        }
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0u);
        nodes_.reserve(2 * n / kLeafSize + 2);
        build(centroids, 0, static_cast<std::uint32_t>(n));

        // Leaf-ordered copy of the triangle corners for cache-friendly queries.
        std::vector<std::array<Vec3, 3>> packed(n);
        for (std::size_t i = 0; i < n; ++i) packed[i] = corners_[order_[i]];
        packed_ = std::move(packed);
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    /// Triangle ids in leaf order; leaf i covers order()[first, first + count).
    const std::vector<std::uint32_t>& order() const { return order_; }
    std::size_t triangle_count() const { return corners_.size(); }
    const std::array<Vec3, 3>& triangle(std::uint32_t f) const { return corners_[f]; }

    /// Exact closest point on the mesh to x. `hint` seeds the search bound with a
    /// triangle likely to be close (e.g. the previous answer for a nearby point).
    UdfResult closest(const Vec3& x, std::optional<std::uint32_t> hint = std::nullopt) const {
        UdfResult best;
        double best_d2 = std::numeric_limits<double>::infinity();
        if (hint && *hint < corners_.size()) {
            const auto& c = corners_[*hint];
            best.closest = closest_point_on_triangle(x, c[0], c[1], c[2]);
            best.tri = *hint;
            best_d2 = (best.closest - x).squaredNorm();
        }

        std::uint32_t stack[128];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const std::uint32_t ni = stack[--top];
            const Node& node = nodes_[ni];
            if (node.box.distance2(x) > best_d2) continue;
            if (node.count > 0) {
                for (std::uint32_t s = node.first; s < node.first + node.count; ++s) {
                    const auto& c = packed_[s];
                    const Vec3 q = closest_point_on_triangle(x, c[0], c[1], c[2]);
                    const double d2 = (q - x).squaredNorm();
                    const std::uint32_t tri = order_[s];
                    if (d2 < best_d2 || (d2 == best_d2 && tri < best.tri)) {
                        best_d2 = d2;
                        best.closest = q;
                        best.tri = tri;
                    }
                }
                continue;
            }
            const std::uint32_t l = ni + 1, r = node.right;
            const double dl = nodes_[l].box.distance2(x), dr = nodes_[r].box.distance2(x);
            // Visit the nearer child first.
            if (dl <= dr) {
                stack[top++] = r;
                stack[top++] = l;
            } else {
                stack[top++] = l;
                stack[top++] = r;
            }
        }
        best.distance = std::sqrt(best_d2);
        return best;
    }

  private:
    std::uint32_t build(const std::vector<Vec3>& centroids, std::uint32_t begin, std::uint32_t end) {
        const auto ni = static_cast<std::uint32_t>(nodes_.size());
        nodes_.emplace_back();
        Aabb box, cbox;
        for (std::uint32_t i = begin; i < end; ++i) {
            for (const Vec3& p : corners_[order_[i]]) box.extend(p);
            cbox.extend(centroids[order_[i]]);
        }
        nodes_[ni].box = box;
        if (end - begin <= kLeafSize) {
            nodes_[ni].first = begin;
            nodes_[ni].count = end - begin;
            return ni;
        }
        int axis = 0;
        cbox.extent().maxCoeff(&axis);
        const std::uint32_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double ca = centroids[a][axis], cb = centroids[b][axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        build(centroids, begin, mid);
        const std::uint32_t right = build(centroids, mid, end);
        nodes_[ni].right = right;
        return ni;
    }

    std::vector<std::array<Vec3, 3>> corners_;
    std::vector<std::array<Vec3, 3>> packed_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

inline Bvh build_bvh(const TriMesh& mesh) { return Bvh(mesh); }

inline UdfResult udf_query(const Bvh& bvh, const Vec3& x) { return bvh.closest(x); }

/// (x - closest) / distance; undefined within kGradientEpsilon of the surface.
inline UdfGradient udf_gradient(const Bvh& bvh, const Vec3& x) {
    const UdfResult r = bvh.closest(x);
    if (r.distance <= kGradientEpsilon) return {};
    return {(x - r.closest) / r.distance, true};
}

} // namespace sparcubes

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "common.hpp"

namespace sparcubes {

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void extend(const Aabb& b) {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }
    bool empty() const { return (lo.array() > hi.array()).any(); }
    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return 0.5 * (lo + hi); }
    bool contains(const Vec3& p, double eps = 0.0) const {
        return (p.array() >= lo.array() - eps).all() && (p.array() <= hi.array() + eps).all();
    }
    /// Squared distance from p to the box (0 inside).
    double distance2(const Vec3& p) const {
        const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
        return d.squaredNorm();
    }
};

/// Closest point on triangle (a, b, c) to p, by Voronoi region classification.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

/// Separating-axis overlap test between a triangle and a closed axis-aligned box.
inline bool triangle_box_overlap(const Vec3& center, const Vec3& half, const Vec3& a, const Vec3& b,
                                 const Vec3& c) {
    const Vec3 v0 = a - center, v1 = b - center, v2 = c - center;
    const Vec3 e[3] = {v1 - v0, v2 - v1, v0 - v2};

    // Box face normals.
    for (int k = 0; k < 3; ++k) {
        const double mn = std::min({v0[k], v1[k], v2[k]});
        const double mx = std::max({v0[k], v1[k], v2[k]});
        if (mn > half[k] || mx < -half[k]) return false;
    }
    // Triangle normal.
    const Vec3 n = e[0].cross(e[1]);
    {
        const double r = half.dot(n.cwiseAbs());
        const double s = n.dot(v0);
        if (s > r || s < -r) return false;
    }
    // Edge cross products.
    for (const Vec3& edge : e) {
        for (int k = 0; k < 3; ++k) {
            Vec3 axis = Vec3::Zero();
            axis[k] = 1.0;
            axis = axis.cross(edge);
            if (axis.squaredNorm() == 0.0) continue;
            const double p0 = axis.dot(v0), p1 = axis.dot(v1), p2 = axis.dot(v2);
            const double r = half.dot(axis.cwiseAbs());
            if (std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r) return false;
        }
    }
    return true;
}

/// Moller-Trumbore segment/ray hit; returns the ray parameter or a negative value on miss.
inline double ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-300) return -1.0;
    const double inv = 1.0 / det;
    const Vec3 tv = origin - a;
    const double u = tv.dot(pv) * inv;
    if (u < 0.0 || u > 1.0) return -1.0;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < 0.0 || u + v > 1.0) return -1.0;
    return e2.dot(qv) * inv;
}

} // namespace sparcubes

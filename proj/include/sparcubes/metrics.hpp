#pragma once

// Surface comparison metrics and mesh topology audit.
//
// Conventions: CD is the mean (not squared) L2 nearest-neighbour distance,
// averaged over both directions and reported x1e4; ANC reported x1e2; F1
// reported x1e2 with tau = tau_rel * bbox diagonal of the reference mesh.

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <json.hpp>

#include "mesh_io.hpp"
#include "parallel.hpp"

namespace sparcubes {

inline constexpr double kCdScale = 1e4;
inline constexpr double kAncScale = 1e2;
inline constexpr double kF1Scale = 1e2;

struct SampledCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<std::uint32_t> faces;

    std::size_t size() const { return points.size(); }
};

/// Area-weighted uniform samples on the surface, deterministic for a seed.
inline SampledCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
    if (mesh.empty()) throw Error("cannot sample an empty mesh");
    if (n == 0) throw Error("sample count must be >= 1");
    std::vector<double> cumulative(mesh.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) cumulative[f] = total += mesh.face_area(f);
    if (!(total > 0.0)) throw Error("mesh has zero total area");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    SampledCloud cloud;
    cloud.points.reserve(n);
    cloud.normals.reserve(n);
    cloud.faces.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double pick = uni(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        if (it == cumulative.end()) --it;
        // Skip zero-area faces that share a cumulative value with their predecessor.
        while (mesh.face_area(static_cast<std::size_t>(it - cumulative.begin())) == 0.0) ++it;
        const auto f = static_cast<std::uint32_t>(it - cumulative.begin());
        const double r1 = std::sqrt(uni(rng)), r2 = uni(rng);
        const Face& t = mesh.faces[f];
        const Vec3 p = (1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]] +
                       r1 * r2 * mesh.vertices[t[2]];
        cloud.points.push_back(p);
        cloud.normals.push_back(mesh.face_normal(f));
        cloud.faces.push_back(f);
    }
    return cloud;
}

/// Nearest-neighbour index over a point set.
class PointIndex {
  public:
    explicit PointIndex(const std::vector<Vec3>& points) : points_(&points) {
        std::vector<Value> values;
        values.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i)
            values.emplace_back(Point(points[i][0], points[i][1], points[i][2]), static_cast<std::uint32_t>(i));
        tree_ = Tree(values.begin(), values.end());
    }

    struct Hit {
        std::uint32_t index = 0;
        double distance = 0.0;
    };

    Hit nearest(const Vec3& q) const {
        std::vector<Value> out;
        tree_.query(boost::geometry::index::nearest(Point(q[0], q[1], q[2]), 1), std::back_inserter(out));
        if (out.empty()) throw Error("nearest-neighbour query on an empty index");
        const std::uint32_t i = out.front().second;
        return {i, ((*points_)[i] - q).norm()};
    }

  private:
    using Point = boost::geometry::model::point<double, 3, boost::geometry::cs::cartesian>;
    using Value = std::pair<Point, std::uint32_t>;
    using Tree = boost::geometry::index::rtree<Value, boost::geometry::index::rstar<16>>;
    const std::vector<Vec3>* points_;
    Tree tree_;
};

/// Nearest neighbour in `to` for every point of `from`.
inline std::vector<PointIndex::Hit> nearest_all(const SampledCloud& from, const PointIndex& to) {
    std::vector<PointIndex::Hit> hits(from.size());
    parallel_for(0, from.size(), [&](std::size_t i) { hits[i] = to.nearest(from.points[i]); }, 256);
    return hits;
}

/// Exhaustive nearest neighbour, the reference for PointIndex.
inline PointIndex::Hit nearest_brute(const std::vector<Vec3>& points, const Vec3& q) {
    PointIndex::Hit best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = (points[i] - q).norm();
        if (d < best.distance) best = {static_cast<std::uint32_t>(i), d};
    }
    return best;
}

/// Both directions of the nearest-neighbour relation between two clouds.
struct CloudMatch {
    std::vector<PointIndex::Hit> a_to_b, b_to_a;

    CloudMatch(const SampledCloud& a, const SampledCloud& b) {
        if (a.size() == 0 || b.size() == 0) throw Error("metric needs non-empty clouds");
        a_to_b = nearest_all(a, PointIndex(b.points));
        b_to_a = nearest_all(b, PointIndex(a.points));
    }
};

namespace detail {

inline double mean_distance(const std::vector<PointIndex::Hit>& hits) {
    double s = 0.0;
    for (const auto& h : hits) s += h.distance;
    return s / static_cast<double>(hits.size());
}

inline double fraction_within(const std::vector<PointIndex::Hit>& hits, double tau) {
    std::size_t n = 0;
    for (const auto& h : hits) n += h.distance <= tau;
    return static_cast<double>(n) / static_cast<double>(hits.size());
}

inline double mean_abs_dot(const SampledCloud& from, const SampledCloud& to, const std::vector<PointIndex::Hit>& hits) {
    double s = 0.0;
    for (std::size_t i = 0; i < hits.size(); ++i) s += std::abs(from.normals[i].dot(to.normals[hits[i].index]));
    return s / static_cast<double>(hits.size());
}

} // namespace detail

/// Raw (unscaled) chamfer distance.
inline double chamfer_raw(const CloudMatch& m) {
    return 0.5 * (detail::mean_distance(m.a_to_b) + detail::mean_distance(m.b_to_a));
}
inline double anc_raw(const SampledCloud& a, const SampledCloud& b, const CloudMatch& m) {
    return 0.5 * (detail::mean_abs_dot(a, b, m.a_to_b) + detail::mean_abs_dot(b, a, m.b_to_a));
}
inline double f1_raw(const CloudMatch& m, double tau) {
    if (!(tau > 0.0)) throw Error("F1 threshold must be positive");
    const double p = detail::fraction_within(m.a_to_b, tau), r = detail::fraction_within(m.b_to_a, tau);
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

/// Chamfer distance x1e4.
inline double chamfer(const SampledCloud& a, const SampledCloud& b) { return kCdScale * chamfer_raw(CloudMatch(a, b)); }
/// Absolute normal consistency x1e2.
inline double anc(const SampledCloud& a, const SampledCloud& b) { return kAncScale * anc_raw(a, b, CloudMatch(a, b)); }
/// F1 x1e2; a is the prediction (precision side), b the reference.
inline double f1(const SampledCloud& a, const SampledCloud& b, double tau) { return kF1Scale * f1_raw(CloudMatch(a, b), tau); }

struct TopologyAudit {
    std::size_t boundary_edges = 0;
    std::size_t nonmanifold_edges = 0;
    std::size_t edges = 0;
    std::size_t connected_components = 0;
    long long euler_characteristic = 0;
    bool watertight() const { return boundary_edges == 0 && nonmanifold_edges == 0; }
};

namespace detail {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

} // namespace detail

/// Edge incidence counts, components of the shared-edge face graph, and
/// V - E + F over referenced vertices.
inline TopologyAudit watertight_audit(const TriMesh& mesh) {
    TopologyAudit audit;
    const std::size_t nf = mesh.faces.size();
    std::vector<std::pair<std::uint64_t, std::uint32_t>> edges;
    edges.reserve(3 * nf);
    std::vector<std::uint8_t> used(mesh.vertices.size(), 0);
    for (std::size_t f = 0; f < nf; ++f)
        for (int k = 0; k < 3; ++k) {
            const Face& t = mesh.faces[f];
            edges.emplace_back(detail::edge_key(t[k], t[(k + 1) % 3]), static_cast<std::uint32_t>(f));
            used[t[k]] = 1;
        }
    std::sort(edges.begin(), edges.end());

    detail::DisjointSets sets(nf);
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j].first == edges[i].first) {
            sets.unite(edges[i].second, edges[j].second);
            ++j;
        }
        const std::size_t count = j - i;
        ++audit.edges;
        if (count == 1) ++audit.boundary_edges;
        if (count > 2) ++audit.nonmanifold_edges;
        i = j;
    }
    for (std::uint32_t f = 0; f < nf; ++f) audit.connected_components += sets.find(f) == f;
    const auto v = static_cast<long long>(std::count(used.begin(), used.end(), std::uint8_t{1}));
    audit.euler_characteristic = v - static_cast<long long>(audit.edges) + static_cast<long long>(nf);
    return audit;
}

/// Face indices grouped by shared-edge connected component.
inline std::vector<std::vector<std::uint32_t>> face_components(const TriMesh& mesh) {
    const std::size_t nf = mesh.faces.size();
    std::vector<std::pair<std::uint64_t, std::uint32_t>> edges;
    edges.reserve(3 * nf);
    for (std::size_t f = 0; f < nf; ++f)
        for (int k = 0; k < 3; ++k)
            edges.emplace_back(detail::edge_key(mesh.faces[f][k], mesh.faces[f][(k + 1) % 3]),
                               static_cast<std::uint32_t>(f));
    std::sort(edges.begin(), edges.end());
    detail::DisjointSets sets(nf);
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (edges[i].first == edges[i - 1].first) sets.unite(edges[i].second, edges[i - 1].second);
    std::map<std::uint32_t, std::vector<std::uint32_t>> groups;
    for (std::uint32_t f = 0; f < nf; ++f) groups[sets.find(f)].push_back(f);
    std::vector<std::vector<std::uint32_t>> out;
    for (auto& [root, faces] : groups) out.push_back(std::move(faces));
    return out;
}

struct MetricsConfig {
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    double tau_rel = 0.01;
};

struct MetricsReport {
    MetricsConfig config;
    double tau = 0.0;
    double cd = 0.0;   // x1e4
    double anc = 0.0;  // x1e2
    double f1 = 0.0;   // x1e2
    TopologyAudit audit;

    nlohmann::json to_json() const {
        return {
            {"protocol",
             {{"samples", config.samples},
              {"seed", config.seed},
              {"tau_rule", "tau_rel * bbox_diagonal(reference)"},
              {"tau_rel", config.tau_rel},
              {"tau", tau},
              {"cd_convention", "0.5 * (mean L2 a->b + mean L2 b->a), x1e4"}}},
            {"cd", cd},
            {"anc", anc},
            {"f1", f1},
            {"boundary_edge_count", audit.boundary_edges},
            {"nonmanifold_edge_count", audit.nonmanifold_edges},
            {"connected_components", audit.connected_components},
            {"euler_characteristic", audit.euler_characteristic},
            {"is_watertight", audit.watertight()},
        };
    }

    std::string to_text() const {
        std::ostringstream out;
        out << "# samples=" << config.samples << " seed=" << config.seed << " tau=" << config.tau_rel
            << "*bbox_diag(ref)=" << tau << " cd=mean L2 both ways x1e4\n";
        out << "cd = " << cd << "\nanc = " << anc << "\nf1 = " << f1 << '\n';
        out << "boundary_edge_count = " << audit.boundary_edges << '\n';
        out << "nonmanifold_edge_count = " << audit.nonmanifold_edges << '\n';
        out << "connected_components = " << audit.connected_components << '\n';
        out << "euler_characteristic = " << audit.euler_characteristic << '\n';
        out << "is_watertight = " << (audit.watertight() ? "true" : "false") << '\n';
        return out.str();
    }
};

/// Compares `test` against `reference`; the audit describes `test`.
inline MetricsReport compute_metrics(const TriMesh& reference, const TriMesh& test, const MetricsConfig& cfg = {}) {
    MetricsReport report;
    report.config = cfg;
    const Aabb box = reference.bounds();
    report.tau = cfg.tau_rel * box.extent().norm();
    const SampledCloud ref = sample_surface(reference, cfg.samples, cfg.seed);
    const SampledCloud tst = sample_surface(test, cfg.samples, cfg.seed + 1);
    const CloudMatch match(tst, ref);
    report.cd = kCdScale * chamfer_raw(match);
    report.anc = kAncScale * anc_raw(tst, ref, match);
    report.f1 = kF1Scale * f1_raw(match, report.tau);
    report.audit = watertight_audit(test);
    return report;
}

} // namespace sparcubes

// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <tbb/global_control.h>
#include <tbb/task_arena.h>

#include <sparcubes/sparcubes.hpp>

#include "support/oracles.hpp"
#include "support/shapes.hpp"

using namespace sparcubes;

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kPi = std::numbers::pi;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Named {
    std::string name;
    TriMesh mesh;
};

TriMesh rotated(TriMesh m, double angle, const Vec3& axis) {
    const Eigen::Matrix3d r = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    for (Vec3& v : m.vertices) v = r * v;
    return m;
}

TriMesh cut_below(const TriMesh& m, double z) {
    TriMesh out;
    out.vertices = m.vertices;
    for (const Face& f : m.faces)
        if (m.vertices[f[0]].z() + m.vertices[f[1]].z() + m.vertices[f[2]].z() > 3.0 * z) out.faces.push_back(f);
    return compact_vertices(out);
}

TriMesh merged(std::initializer_list<TriMesh> parts) {
    TriMesh out;
    for (const TriMesh& p : parts) out = out.empty() ? p : test::merged(out, p);
    return out;
}

std::vector<Named> corpus() {
    using test::box, test::disc, test::icosphere, test::open_cylinder, test::plate, test::soup, test::torus;
    const Vec3 x = Vec3::UnitX(), d = Vec3(1, 1, 0);
    std::vector<Named> c;
    c.push_back({"sphere", icosphere(0.5, 4)});
    c.push_back({"sphere-offset", icosphere(0.3, 3, Vec3(0.21, -0.13, 0.07))});
    c.push_back({"sphere-inward", test::flipped(icosphere(0.5, 3))});
    c.push_back({"hollow-sphere", test::merged(icosphere(0.7, 4), test::flipped(icosphere(0.4, 3)))});
    c.push_back({"nested-spheres", test::merged(icosphere(0.7, 4), icosphere(0.4, 3))});
    c.push_back({"half-sphere", cut_below(icosphere(0.6, 4), 0.0)});
    c.push_back({"punched-sphere", test::punch_hole(test::punch_hole(icosphere(0.6, 4), Vec3(0, 0, 0.6), 0.15),
                                                    Vec3(0.6, 0, 0), 0.1)});
    c.push_back({"box", box(Vec3(-0.6, -0.4, -0.3), Vec3(0.6, 0.4, 0.3))});
    c.push_back({"box-rotated", rotated(box(Vec3(-0.5, -0.5, -0.2), Vec3(0.5, 0.5, 0.2)), 0.6, Vec3(1, 2, 3))});
    c.push_back({"plate", plate(-0.8, -0.6, 0.8, 0.6, 0.013, 8)});
    c.push_back({"plate-lattice", plate(-0.8, -0.8, 0.8, 0.8, 0.0, 4)});
    c.push_back({"plate-tilted", rotated(plate(-0.7, -0.7, 0.7, 0.7, 0.0, 6), 0.5, d)});
    c.push_back({"crossed-plates", test::merged(plate(-0.7, -0.7, 0.7, 0.7, 0.0, 4),
                                                rotated(plate(-0.7, -0.7, 0.7, 0.7, 0.0, 4), kPi / 2, x))});
    c.push_back({"disc", disc(0.8)});
    c.push_back({"disc-tilted", rotated(disc(0.7, 48, 6), 0.9, Vec3(1, -1, 0.5))});
    c.push_back({"open-cylinder", open_cylinder(0.5, -0.7, 0.7)});
    c.push_back({"open-cylinder-tilted", rotated(open_cylinder(0.3, -0.6, 0.6, 32, 6), 0.7, x)});
    c.push_back({"torus", torus(0.5, 0.2, 48, 24)});
    c.push_back({"torus-thin", torus(0.6, 0.06, 64, 16)});
    c.push_back({"punched-torus", test::punch_hole(torus(0.5, 0.2, 48, 24), Vec3(0.7, 0, 0), 0.1)});
    c.push_back({"torus-link", test::merged(torus(0.45, 0.12, 48, 16), torus(0.45, 0.12, 48, 16, Vec3(0.45, 0, 0), 1))});
    c.push_back({"torus-chain", merged({torus(0.3, 0.08, 40, 12, Vec3(-0.75, 0, 0)), torus(0.3, 0.08, 40, 12, Vec3(-0.25, 0, 0), 1),
                                        torus(0.3, 0.08, 40, 12, Vec3(0.25, 0, 0)), torus(0.3, 0.08, 40, 12, Vec3(0.75, 0, 0), 1)})});
    c.push_back({"soup", soup(300, 0.8, 0.15, 3)});
    c.push_back({"soup-dense", soup(2000, 0.7, 0.08, 17)});
    c.push_back({"box+small-sphere", test::merged(box(Vec3(-0.9, -0.9, -0.9), Vec3(0.3, 0.3, 0.3)),
                                                  icosphere(0.05, 3, Vec3(0.7, 0.7, 0.7)))});
    c.push_back({"two-spheres", test::merged(icosphere(0.35, 3, Vec3(-0.5, 0, 0)), icosphere(0.25, 3, Vec3(0.55, 0.1, 0)))});
    c.push_back({"three-boxes", merged({box(Vec3(-0.9, -0.2, -0.2), Vec3(-0.5, 0.2, 0.2)), box(Vec3(-0.2, -0.2, -0.2), Vec3(0.2, 0.2, 0.2)),
                                        box(Vec3(0.5, -0.2, -0.2), Vec3(0.9, 0.2, 0.2))})});
    c.push_back({"overlapping-spheres", test::merged(icosphere(0.45, 3, Vec3(-0.2, 0, 0)), icosphere(0.45, 3, Vec3(0.2, 0.05, 0)))});
    c.push_back({"box-through-sphere", test::merged(icosphere(0.5, 3), box(Vec3(-0.8, -0.15, -0.15), Vec3(0.8, 0.15, 0.15)))});
    c.push_back({"plate+sphere", test::merged(plate(-0.8, -0.8, 0.8, 0.8, -0.4, 4), icosphere(0.3, 3, Vec3(0, 0, 0.2)))});
    return c;
}

PipelineConfig config(int resolution, bool normalize = true) {
    PipelineConfig cfg;
    cfg.resolution = resolution;
    cfg.normalize = normalize;
    return cfg;
}

struct Line {
    bool pass = false;
    std::string detail;
};

void report(int id, const Line& line) {
    std::cout << "criterion " << id << ": " << (line.pass ? "PASS" : "FAIL") << "  " << line.detail << std::endl;
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

// 1. Every corpus mesh is watertight and edge-manifold at R = 128 and 256.
Line watertight_corpus() {
    const auto meshes = corpus();
    std::size_t ok = 0, total = 0;
    std::string failures;
    for (int R : {128, 256}) {
        for (const Named& m : meshes) {
            const auto t0 = Clock::now();
            const RemeshResult r = remesh(m.mesh, config(R));
            const TopologyAudit a = watertight_audit(r.mesh);
            const bool good = a.boundary_edges == 0 && a.nonmanifold_edges == 0 && !r.mesh.empty();
            ok += good;
            ++total;
            std::cerr << "  [1] R=" << R << " " << m.name << ": faces " << r.mesh.faces.size() << " boundary "
                      << a.boundary_edges << " nonmanifold " << a.nonmanifold_edges << " components "
                      << a.connected_components << " (" << fmt(seconds_since(t0), 3) << " s)\n";
            if (!good) failures += " " + m.name + "@" + std::to_string(R);
        }
    }
    return {ok == total && meshes.size() == 30,
            std::to_string(ok) + "/" + std::to_string(total) + " runs watertight over " + std::to_string(meshes.size()) +
                " meshes at R=128,256" + (failures.empty() ? "" : "; failed:" + failures)};
}

// 2. Box plus detached small sphere keeps both components.
Line component_preservation() {
    const double radius = 0.05;
    const TriMesh m = test::merged(test::box(Vec3(-0.9, -0.9, -0.9), Vec3(0.3, 0.3, 0.3)),
                                   test::icosphere(radius, 3, Vec3(0.7, 0.7, 0.7)));
    const auto t0 = Clock::now();
    const RemeshResult r = remesh(m, config(128, false));
    const double secs = seconds_since(t0);
    const TopologyAudit a = watertight_audit(r.mesh);
    const double voxels = 2.0 * radius / r.grid.h();
    return {a.connected_components == 2 && secs < 30.0 && voxels >= 6.0,
            "components " + std::to_string(a.connected_components) + ", sphere " + fmt(voxels, 3) +
                " voxels across, " + fmt(secs, 3) + " s at R=128"};
}

// 3. Sphere fidelity against the analytic surface.
Line sphere_fidelity() {
    const TriMesh sphere = test::icosphere(0.5, 6);
    bool pass = true;
    std::string detail;
    double prev = std::numeric_limits<double>::infinity();
    double reduction = 0.0;
    for (int R : {64, 128, 256}) {
        const RemeshResult r = remesh(sphere, config(R, false));
        const double h = r.grid.h();
        const double cd = test::sphere_chamfer(r.mesh, 0.5, 200000);
        pass = pass && cd < h && cd < prev;
        detail += "R=" + std::to_string(R) + " CD " + fmt(cd) + " (h " + fmt(h) + "); ";
        if (R == 64) {
            SparseGrid rest = r.grid;
            rest.delta.assign(rest.corner_count(), Vec3::Zero());
            const double cd0 = test::sphere_chamfer(marching_cubes(rest).mesh, 0.5, 200000);
            reduction = 1.0 - cd / cd0;
            detail += "delta=0 CD " + fmt(cd0) + "; ";
        }
        prev = cd;
    }
    pass = pass && reduction >= 0.30;
    return {pass, detail + "reduction at R=64 " + fmt(100.0 * reduction, 3) + "%"};
}

// 4. A zero-thickness disc closes into a thin slab.
Line open_surface_closure() {
    bool pass = true;
    std::string detail;
    for (double offset : {0.0, 0.0037}) {
        const TriMesh disc = test::translated(test::disc(0.8), Vec3(0, 0, offset));
        const RemeshResult r = remesh(disc, config(128, false));
        const TopologyAudit a = watertight_audit(r.mesh);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const Vec3& v : r.mesh.vertices) lo = std::min(lo, v.z()), hi = std::max(hi, v.z());
        const double thickness = (hi - lo) / r.grid.h();
        pass = pass && a.boundary_edges == 0 && a.nonmanifold_edges == 0 && thickness <= 4.0 && thickness > 0.0;
        detail += "z=" + fmt(offset) + ": boundary " + std::to_string(a.boundary_edges) + ", thickness " +
                  fmt(thickness, 3) + "h; ";
    }
    return {pass, detail};
}

// 5a. Distance queries against an exhaustive triangle scan.
std::pair<bool, std::string> udf_suite() {
    const std::vector<TriMesh> meshes = {
        test::icosphere(0.5, 3), test::torus(0.5, 0.2, 32, 16), test::disc(0.7, 24, 4), test::soup(200, 0.8, 0.2, 11),
        test::merged(test::box(Vec3(-0.9, -0.9, -0.9), Vec3::Zero()), test::open_cylinder(0.3, 0.1, 0.8, 16, 4))};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    double worst = 0.0;
    for (const TriMesh& m : meshes) {
        const Bvh bvh(m);
        for (int i = 0; i < 1000; ++i) {
            const Vec3 x(u(rng), u(rng), u(rng));
            worst = std::max(worst, std::abs(bvh.closest(x).distance - test::brute_udf(m, x)));
        }
    }
    return {worst <= 1e-9, "(a) max |udf - scan| " + fmt(worst, 3) + " over 5000 points"};
}

// 5b. Flood-fill corner labels against ray parity outside the band.
std::pair<bool, std::string> flood_fill_suite() {
    const std::vector<TriMesh> meshes = {test::icosphere(0.6, 3), test::torus(0.5, 0.2, 32, 16),
                                         test::merged(test::box(Vec3(-0.9, -0.9, -0.9), Vec3(-0.1, 0.2, 0.3)),
                                                      test::icosphere(0.25, 2, Vec3(0.5, 0.5, 0.5)))};
    std::mt19937_64 rng(3);
    std::size_t checked = 0, agree = 0;
    const int R = 64;
    for (const TriMesh& m : meshes) {
        SparseGrid grid = extract_active_voxels(Bvh(m), R);
        const OccupancyMask mask = flood_fill(grid);
        std::uniform_int_distribution<int> u(0, R);
        for (int taken = 0; taken < 4000;) {
            const Vec3i c(u(rng), u(rng), u(rng));
            if (corner_index(grid, CornerKey::pack(c))) continue;
            agree += (mask.corner_label(c) == 1) == test::ray_parity_inside(m, grid.lattice_position(c));
            ++checked, ++taken;
        }
    }
    return {agree == checked && checked >= 10000,
            "(b) " + std::to_string(agree) + "/" + std::to_string(checked) + " corners agree"};
}

SparseGrid single_cube(int code, std::mt19937_64& rng) {
    SparseGrid g = make_grid(64, 2.0, {Vec3i(10, 20, 30)});
    std::uniform_real_distribution<double> mag(0.05, 1.0);
    g.phi.resize(8);
    for (int k = 0; k < 8; ++k) g.phi[g.cube_corners[0][k]] = ((code >> k) & 1 ? -1.0 : 1.0) * mag(rng) * g.h();
    return g;
}

int local_corner(const SparseGrid& g, std::uint32_t v) {
    for (int k = 0; k < 8; ++k)
        if (g.cube_corners[0][k] == v) return k;
    return -1;
}

bool single_cube_matches(int code, std::mt19937_64& rng) {
    const SparseGrid g = single_cube(code, rng);
    const ExtractionResult r = marching_cubes(g);
    std::set<test::CubeEdge> edges;
    std::vector<test::CubeEdge> vertex_edge;
    for (std::size_t v = 0; v < r.mesh.vertices.size(); ++v) {
        const int a = local_corner(g, r.jacobian.corner_a[v]), b = local_corner(g, r.jacobian.corner_b[v]);
        if (a < 0 || b < 0) return false;
        vertex_edge.emplace_back(std::min(a, b), std::max(a, b));
        edges.insert(vertex_edge.back());
    }
    if (edges != test::crossed_edges(code) || edges.size() != r.mesh.vertices.size()) return false;

    std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
    for (const Face& f : r.mesh.faces)
        for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
    std::set<std::pair<test::CubeEdge, test::CubeEdge>> boundary;
    for (const auto& [e, count] : directed) {
        if (count != 1) return false;
        if (!directed.count({e.second, e.first})) {
            const auto x = vertex_edge[e.first], y = vertex_edge[e.second];
            boundary.insert({std::min(x, y), std::max(x, y)});
        }
    }
    if (boundary != test::face_segments(code)) return false;

    for (const Face& f : r.mesh.faces) {
        Vec3 outward = Vec3::Zero();
        for (std::uint32_t v : f) {
            const std::uint32_t a = r.jacobian.corner_a[v], b = r.jacobian.corner_b[v];
            const Vec3 ab = g.corner_position(b) - g.corner_position(a);
            outward += g.phi[a] < 0.0 ? ab : -ab;
        }
        const Vec3 n = (r.mesh.vertices[f[1]] - r.mesh.vertices[f[0]]).cross(r.mesh.vertices[f[2]] - r.mesh.vertices[f[0]]);
        if (n.dot(outward) <= 0.0) return false;
    }
    return true;
}

// 5c. All 256 single-cube sign patterns against the case oracle.
std::pair<bool, std::string> marching_cubes_suite() {
    std::mt19937_64 rng(1);
    int ok = 0;
    for (int code = 0; code < 256; ++code) ok += single_cube_matches(code, rng);
    return {ok == 256, "(c) " + std::to_string(ok) + "/256 cases match"};
}

// 5d. Extraction Jacobians against central differences.
std::pair<bool, std::string> jacobian_suite() {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> codes(1, 254);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    const double step = 1e-5;
    auto rel = [](const Vec3& fd, const Vec3& an) { return (fd - an).norm() / std::max(an.norm(), 1e-3); };
    int configs = 0;
    double worst = 0.0;
    while (configs < 1000) {
        SparseGrid g = single_cube(codes(rng), rng);
        for (std::uint32_t v = 0; v < 8; ++v) g.set_delta(v, Vec3(u(rng), u(rng), u(rng)) * g.h());
        const ExtractionResult base = marching_cubes(g);
        if (base.jacobian.size() == 0) continue;
        std::uniform_int_distribution<std::size_t> pick(0, base.jacobian.size() - 1);
        const std::size_t v = pick(rng);
        const std::uint32_t a = base.jacobian.corner_a[v], b = base.jacobian.corner_b[v];
        if (std::abs(g.phi[a] - g.phi[b]) <= 1e-3) continue;
        ++configs;
        const VertexPartials J = vertex_jacobian(base.jacobian, v);
        const double eps = step * g.h();
        auto moved = [&](auto&& perturb, double sgn) {
            SparseGrid p = g;
            perturb(p, sgn);
            return marching_cubes(p).mesh.vertices[v];
        };
        for (int which = 0; which < 2; ++which) {
            const std::uint32_t c = which ? b : a;
            auto bump_phi = [&](SparseGrid& p, double s) { p.phi[c] += s * eps; };
            worst = std::max(worst, rel((moved(bump_phi, 1) - moved(bump_phi, -1)) / (2 * eps),
                                        which ? J.dp_dphi_b : J.dp_dphi_a));
            for (int axis = 0; axis < 3; ++axis) {
                auto bump_delta = [&](SparseGrid& p, double s) { p.delta[c][axis] += s * eps; };
                const Vec3 an = Vec3::Unit(axis) * (which ? J.dp_ddelta_b : J.dp_ddelta_a);
                worst = std::max(worst, rel((moved(bump_delta, 1) - moved(bump_delta, -1)) / (2 * eps), an));
            }
        }
    }
    return {worst < 1e-4, "(d) max relative error " + fmt(worst, 3) + " over 1000 configurations"};
}

// 5e. Each filled loop of length n adds n - 2 faces and removes n boundary edges.
std::pair<bool, std::string> hole_fill_suite() {
    TriMesh m = test::icosphere(0.6, 4);
    for (const Vec3& c : {Vec3(0, 0, 0.6), Vec3(0.6, 0, 0), Vec3(0, -0.6, 0), Vec3(-0.35, 0.35, -0.35)})
        m = test::punch_hole(m, c, 0.08 + 0.03 * c[0]);
    m = test::merged(m, test::punch_hole(test::torus(0.5, 0.2, 48, 24, Vec3(2, 0, 0)), Vec3(2.7, 0, 0), 0.12));
    const BoundaryLoops loops = find_boundary_loops(m);
    std::size_t before = test::count_boundary_edges(m), ok = 0;
    TriMesh cur = m;
    for (const BoundaryLoop& loop : loops.loops) {
        const LoopFill fill = fill_loop(loop, cur.vertices);
        cur.faces.insert(cur.faces.end(), fill.faces.begin(), fill.faces.end());
        const std::size_t after = test::count_boundary_edges(cur);
        ok += fill.faces.size() == loop.size() - 2 && before - after == loop.size();
        before = after;
    }
    return {ok == loops.loops.size() && loops.loops.size() >= 5 && before == 0,
            "(e) " + std::to_string(ok) + "/" + std::to_string(loops.loops.size()) + " loops exact"};
}

Line oracle_suites() {
    Line line{true, ""};
    for (auto suite : {udf_suite, flood_fill_suite, marching_cubes_suite, jacobian_suite, hole_fill_suite}) {
        const auto [pass, detail] = suite();
        line.pass = line.pass && pass;
        line.detail += detail + (pass ? "" : " [fail]") + "; ";
    }
    return line;
}

// 6. Ear angles of the straight, right-angle and reversal fixtures.
Line ear_angles() {
    const Vec3 o = Vec3::Zero(), x = Vec3::UnitX(), y = Vec3::UnitY();
    const double straight = ear_angle(-x, o, x), right = ear_angle(-x, o, y), reversal = ear_angle(-x, o, -x);
    const double err = std::max({std::abs(straight - kPi), std::abs(right - kPi / 2), std::abs(reversal)});
    return {err <= 1e-12, "straight " + fmt(straight, 17) + ", right " + fmt(right, 17) + ", reversal " +
                              fmt(reversal, 17) + ", max error " + fmt(err, 3)};
}

std::string spc3_bytes(const SparseGrid& g) {
    std::ostringstream out(std::ios::binary);
    write_spc3(g, out);
    return out.str();
}

// 7. Repeat runs are bit-identical; thread count does not change the result.
Line determinism() {
    const TriMesh m = test::merged(test::torus(0.45, 0.12, 48, 16), test::torus(0.45, 0.12, 48, 16, Vec3(0.45, 0, 0), 1));
    PipelineConfig cfg = config(128);
    cfg.threads = 1;
    const RemeshResult a = remesh(m, cfg), b = remesh(m, cfg);
    const bool identical = spc3_bytes(a.grid) == spc3_bytes(b.grid) && a.mesh.vertices == b.mesh.vertices &&
                           a.mesh.faces == b.mesh.faces;

    const int many = 4;
    cfg.threads = many;
    RemeshResult c;
    int concurrency = 0;
    tbb::global_control workers(tbb::global_control::max_allowed_parallelism, many);
    tbb::task_arena arena(many);
    arena.execute([&] {
        concurrency = tbb::this_task_arena::max_concurrency();
        c = remesh(m, cfg);
    });
    const double cd_a = chamfer(sample_surface(m, 100000, 1), sample_surface(a.mesh, 100000, 2));
    const double cd_c = chamfer(sample_surface(m, 100000, 1), sample_surface(c.mesh, 100000, 2));
    const double diff = std::abs(cd_a - cd_c);
    return {identical && diff < 1e-6, std::string("repeat runs ") + (identical ? "bit-identical" : "differ") +
                                          ", CD 1 thread " + fmt(cd_a, 10) + " vs " + std::to_string(concurrency) +
                                          " threads " + fmt(cd_c, 10) + " (diff " + fmt(diff, 3) + ")"};
}

// 8. Runtime scaling with resolution and a large mesh at R = 512.
Line performance() {
    const TriMesh sphere = test::icosphere(0.5, 5);
    auto timed = [](const TriMesh& m, int R) {
        const auto t0 = Clock::now();
        RemeshResult r = remesh(m, config(R, false));
        return std::make_pair(seconds_since(t0), std::move(r));
    };
    timed(sphere, 64);
    const double t128 = timed(sphere, 128).first, t256 = timed(sphere, 256).first;
    const double ratio = t256 / t128;

    const TriMesh big = test::merged(test::torus(0.45, 0.12, 250, 100), test::torus(0.45, 0.12, 250, 100, Vec3(0.45, 0, 0), 1));
    const auto [t512, r] = timed(big, 512);
    double deform = 0.0;
    for (const auto& [name, sec] : r.timings.stages)
        if (name == "optimize_deformation") deform = sec;
    const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
    return {ratio >= 3.0 && ratio <= 6.0 && t512 < 120.0,
            "R=128 " + fmt(t128, 3) + " s, R=256 " + fmt(t256, 3) + " s, ratio " + fmt(ratio, 3) + "; " +
                std::to_string(big.faces.size()) + " triangles at R=512 " + fmt(t512, 4) + " s (deformation " +
                fmt(deform, 4) + " s over " + std::to_string(r.deform.rows.size() - 1) + " iterations, " +
                std::to_string(cores) + " core(s))"};
}

// 9. Render refinement lowers the view loss everywhere and keeps sphere accuracy.
Line render_refine_non_regression() {
    const int R = 128;
    std::size_t decreased = 0, total = 0;
    std::string failures;
    for (const Named& m : corpus()) {
        PipelineConfig cfg = config(R);
        cfg.render_refine = true;
        const auto t0 = Clock::now();
        const RemeshResult r = remesh(m.mesh, cfg);
        const bool down = r.render && r.render->final_loss < r.render->initial_loss;
        decreased += down;
        ++total;
        std::cerr << "  [9] " << m.name << ": loss " << r.render->initial_loss << " -> " << r.render->final_loss << " ("
                  << fmt(seconds_since(t0), 3) << " s)\n";
        if (!down) failures += " " + m.name;
    }
    const TriMesh sphere = test::icosphere(0.5, 6);
    PipelineConfig cfg = config(R, false);
    const double cd_plain = test::sphere_chamfer(remesh(sphere, cfg).mesh, 0.5, 200000);
    cfg.render_refine = true;
    const double cd_render = test::sphere_chamfer(remesh(sphere, cfg).mesh, 0.5, 200000);
    const double change = cd_render / cd_plain - 1.0;
    return {decreased == total && change <= 0.05,
            std::to_string(decreased) + "/" + std::to_string(total) + " meshes lower the view loss at R=" +
                std::to_string(R) + "; sphere CD " + fmt(cd_plain) + " -> " + fmt(cd_render) + " (" +
                fmt(100.0 * change, 3) + "%)" + (failures.empty() ? "" : "; failed:" + failures)};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<Line (*)()> criteria = {watertight_corpus, component_preservation, sphere_fidelity,
                                              open_surface_closure, oracle_suites, ear_angles,
                                              determinism, performance, render_refine_non_regression};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    bool all = true;
    for (int id = 1; id <= static_cast<int>(criteria.size()); ++id) {
        if (!selected.empty() && !selected.count(id)) continue;
        Line line;
        try {
            line = criteria[id - 1]();
        } catch (const std::exception& e) {
            line = {false, std::string("exception: ") + e.what()};
        }
        report(id, line);
        all = all && line.pass;
    }
    return all ? 0 : 1;
}

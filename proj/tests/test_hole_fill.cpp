#include <gtest/gtest.h>

#include <map>
#include <numbers>
#include <random>

#include <sparcubes/hole_fill.hpp>

#include "support/oracles.hpp"
#include "support/shapes.hpp"

using namespace sparcubes;

namespace {

constexpr double kPi = std::numbers::pi;

/// Removes every face touching either end of an edge whose endpoints both
/// have valence 6, leaving one hole bounded by 8 vertices.
TriMesh eight_vertex_hole(const TriMesh& mesh) {
    std::map<std::uint32_t, int> valence;
    for (const Face& f : mesh.faces)
        for (std::uint32_t v : f) ++valence[v];
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const std::uint32_t a = f[k], b = f[(k + 1) % 3];
            if (valence[a] != 6 || valence[b] != 6) continue;
            TriMesh out;
            out.vertices = mesh.vertices;
            for (const Face& g : mesh.faces)
                if (std::find(g.begin(), g.end(), a) == g.end() && std::find(g.begin(), g.end(), b) == g.end())
                    out.faces.push_back(g);
            return out;
        }
    return mesh;
}

bool consistently_oriented(const TriMesh& m) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
    for (const Face& f : m.faces)
        for (int k = 0; k < 3; ++k)
            if (++directed[{f[k], f[(k + 1) % 3]}] > 1) return false;
    return true;
}

Vec3 polygon_point(int i, int n) {
    const double a = 2.0 * kPi * i / n;
    return {std::cos(a), std::sin(a), 0.0};
}

} // namespace

TEST(EarAngle, Fixtures) {
    const Vec3 o = Vec3::Zero(), x = Vec3::UnitX(), y = Vec3::UnitY();
    EXPECT_NEAR(ear_angle(-x, o, x), kPi, 1e-12);
    EXPECT_NEAR(ear_angle(-x, o, y), kPi / 2, 1e-12);
    EXPECT_NEAR(ear_angle(-x, o, -x), 0.0, 1e-12);
    EXPECT_TRUE(ear_score(o, o, x).degenerate);
    EXPECT_EQ(ear_score(o, o, x).angle, 0.0);
}

TEST(EarAngle, RigidMotionInvariant) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), c(u(rng), u(rng), u(rng));
        const Eigen::Matrix3d r = Eigen::Quaterniond(Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)).normalized())
                                      .toRotationMatrix();
        const Vec3 t(5 * u(rng), 5 * u(rng), 5 * u(rng));
        EXPECT_NEAR(ear_angle(a, b, c), ear_angle(r * a + t, r * b + t, r * c + t), 1e-9);
    }
}

TEST(BoundaryLoops, Examples) {
    EXPECT_EQ(find_boundary_loops(test::box(Vec3::Zero(), Vec3::Ones())).loops.size(), 0u);

    TriMesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.faces = {{0, 1, 2}};
    const auto one = find_boundary_loops(tri);
    ASSERT_EQ(one.loops.size(), 1u);
    EXPECT_EQ(one.loops[0].size(), 3u);

    const auto square = find_boundary_loops(test::plate(0, 0, 1, 1, 0));
    ASSERT_EQ(square.loops.size(), 1u);
    EXPECT_EQ(square.loops[0].size(), 4u);
}

TEST(BoundaryLoops, LoopsFollowSurvivingDirectedEdges) {
    const TriMesh m = test::punch_hole(test::icosphere(0.5, 3), Vec3(0, 0, 0.5), 0.15);
    const auto found = find_boundary_loops(m);
    std::set<std::pair<std::uint32_t, std::uint32_t>> directed;
    for (const auto& e : boundary_edges(m)) directed.insert(e);
    std::size_t walked = 0;
    for (const BoundaryLoop& loop : found.loops) {
        ASSERT_GE(loop.size(), 3u);
        for (std::size_t i = 0; i < loop.size(); ++i)
            EXPECT_TRUE(directed.count({loop.vertices[i], loop.vertices[(i + 1) % loop.size()]}));
        walked += loop.size();
    }
    EXPECT_EQ(walked, directed.size());
}

// Two triangles sharing only a vertex: every boundary edge is still consumed once.
TEST(BoundaryLoops, BranchingVertexConsumesEachEdgeOnce) {
    TriMesh bowtie;
    bowtie.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {-1, 0, 0}, {-1, -1, 0}};
    bowtie.faces = {{0, 1, 2}, {0, 3, 4}};
    Diagnostics diag;
    const auto found = find_boundary_loops(bowtie, &diag);
    std::size_t consumed = 0;
    for (const auto& loop : found.loops) consumed += loop.size();
    for (const auto& d : found.defects) consumed += d.edges;
    EXPECT_EQ(consumed, 6u);
    EXPECT_EQ(found.branching_vertices, 1u);
}

TEST(FillLoop, TriangleLoopIsOneFace) {
    const std::vector<Vec3> pts = {polygon_point(0, 3), polygon_point(1, 3), polygon_point(2, 3)};
    const LoopFill fill = fill_loop({{0, 1, 2}}, pts);
    ASSERT_EQ(fill.faces.size(), 1u);
    std::array<std::uint32_t, 3> sorted = fill.faces[0];
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::array<std::uint32_t, 3>{0, 1, 2}));
}

TEST(FillLoop, ConvexPolygonsCloseWithPositiveArea) {
    for (int n : {4, 6, 9, 30}) {
        TriMesh m;
        BoundaryLoop loop;
        for (int i = 0; i < n; ++i) {
            m.vertices.push_back(polygon_point(i, n));
            loop.vertices.push_back(static_cast<std::uint32_t>(i));
        }
        const LoopFill fill = fill_loop(loop, m.vertices);
        ASSERT_EQ(fill.faces.size(), static_cast<std::size_t>(n - 2));
        m.faces = fill.faces;
        for (std::size_t f = 0; f < m.faces.size(); ++f) EXPECT_GT(m.face_area(f), 1e-6);
        // Every polygon edge is now used once; every chord twice.
        EXPECT_EQ(test::count_boundary_edges(m), static_cast<std::size_t>(n));
        EXPECT_TRUE(consistently_oriented(m));
    }
}

TEST(FillLoop, SharpestEarFirstWithIndexTieBreak) {
    // Square: all angles equal, so the lowest vertex index is clipped first.
    const std::vector<Vec3> sq = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    EXPECT_EQ(fill_loop({{2, 3, 0, 1}}, sq).faces.front(), (Face{1, 0, 3}));
    // A spike at vertex 2 is the sharpest ear.
    const std::vector<Vec3> spike = {{0, 0, 0}, {2, 0, 0}, {1, 5, 0}, {1.1, 0.1, 0}, {0, 1, 0}};
    EXPECT_EQ(fill_loop({{0, 1, 2, 3, 4}}, spike).faces.front()[1], 2u);
}

TEST(FillAllHoles, WatertightInputUnchanged) {
    const TriMesh m = test::icosphere(0.5, 2);
    HoleFillReport rep;
    const TriMesh out = fill_all_holes(m, kDefaultMaxLoop, &rep);
    EXPECT_EQ(out.faces, m.faces);
    EXPECT_EQ(rep.loops, 0u);
}

TEST(FillAllHoles, EightVertexHoleOnSphere) {
    const TriMesh holed = eight_vertex_hole(test::icosphere(0.5, 3));
    const auto loops = find_boundary_loops(holed);
    ASSERT_EQ(loops.loops.size(), 1u);
    ASSERT_EQ(loops.loops[0].size(), 8u);
    HoleFillReport rep;
    const TriMesh out = fill_all_holes(holed, 64, &rep);
    EXPECT_EQ(out.faces.size(), holed.faces.size() + 6);
    EXPECT_EQ(test::count_boundary_edges(out), 0u);
    EXPECT_TRUE(consistently_oriented(out));
    EXPECT_EQ(rep.filled_lengths, std::vector<std::size_t>{8});
}

TEST(FillAllHoles, EachLoopAddsNMinusTwoAndRemovesN) {
    TriMesh m = test::icosphere(0.6, 4);
    for (const Vec3& c : {Vec3(0, 0, 0.6), Vec3(0.6, 0, 0), Vec3(0, -0.6, 0), Vec3(-0.35, 0.35, -0.35)})
        m = test::punch_hole(m, c, 0.08 + 0.03 * c[0]);
    const auto loops = find_boundary_loops(m);
    ASSERT_GE(loops.loops.size(), 4u);
    std::size_t before = test::count_boundary_edges(m);
    TriMesh cur = m;
    for (const BoundaryLoop& loop : loops.loops) {
        const LoopFill fill = fill_loop(loop, cur.vertices);
        EXPECT_EQ(fill.faces.size(), loop.size() - 2);
        cur.faces.insert(cur.faces.end(), fill.faces.begin(), fill.faces.end());
        const std::size_t after = test::count_boundary_edges(cur);
        EXPECT_EQ(before - after, loop.size());
        before = after;
    }
    EXPECT_EQ(before, 0u);
    EXPECT_TRUE(consistently_oriented(cur));
}

TEST(FillAllHoles, LargeRimLeftOpenAndReported) {
    const TriMesh disc = test::disc(0.8, 100, 3);
    Diagnostics diag;
    HoleFillReport rep;
    const TriMesh out = fill_all_holes(disc, 64, &rep, &diag);
    EXPECT_EQ(out.faces, disc.faces);
    EXPECT_EQ(rep.skipped_lengths, std::vector<std::size_t>{100});
    EXPECT_EQ(test::count_boundary_edges(out), 100u);
    EXPECT_FALSE(diag.warnings.empty());
    const TriMesh closed = fill_all_holes(disc, kUnlimitedLoop);
    EXPECT_EQ(test::count_boundary_edges(closed), 0u);
}

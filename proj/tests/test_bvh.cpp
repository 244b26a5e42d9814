#include <gtest/gtest.h>

#include <random>

#include <sparcubes/bvh.hpp>

#include "support/oracles.hpp"
#include "support/shapes.hpp"

using namespace sparcubes;

TEST(Bvh, UnitTriangleDistances) {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    const Bvh bvh(m);
    EXPECT_DOUBLE_EQ(udf_query(bvh, Vec3(0.25, 0.25, 1.0)).distance, 1.0);
    EXPECT_DOUBLE_EQ(udf_query(bvh, Vec3(0.25, 0.25, 0.0)).distance, 0.0);
    EXPECT_NEAR(udf_query(bvh, Vec3(-1, -1, 0)).distance, std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(udf_query(bvh, Vec3(1, 1, 0)).distance, std::sqrt(0.5), 1e-15);
}

TEST(Bvh, EmptyMeshRejected) { EXPECT_THROW(Bvh(TriMesh{}), Error); }

TEST(Bvh, GradientUndefinedOnSurface) {
    const TriMesh m = test::plate(-1, -1, 1, 1, 0.0);
    const Bvh bvh(m);
    EXPECT_FALSE(udf_gradient(bvh, Vec3(0.1, 0.2, 0.0)).defined);
    const UdfGradient g = udf_gradient(bvh, Vec3(0.1, 0.2, -0.5));
    ASSERT_TRUE(g.defined);
    EXPECT_NEAR((g.direction - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);
}

// UDF agrees with an exhaustive triangle scan on 1000 points for each of five meshes.
TEST(Bvh, MatchesExhaustiveScan) {
    const std::vector<TriMesh> meshes = {
        test::icosphere(0.5, 3),
        test::torus(0.5, 0.2, 32, 16),
        test::disc(0.7, 24, 4),
        test::soup(200, 0.8, 0.2, 11),
        test::merged(test::box(Vec3(-0.9, -0.9, -0.9), Vec3(0, 0, 0)), test::open_cylinder(0.3, 0.1, 0.8, 16, 4)),
    };
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (const TriMesh& m : meshes) {
        const Bvh bvh(m);
        for (int i = 0; i < 1000; ++i) {
            const Vec3 x(u(rng), u(rng), u(rng));
            const UdfResult r = bvh.closest(x);
            EXPECT_NEAR(r.distance, test::brute_udf(m, x), 1e-9);
            const auto& t = bvh.triangle(r.tri);
            EXPECT_NEAR((closest_point_on_triangle(x, t[0], t[1], t[2]) - x).norm(), r.distance, 1e-12);
        }
    }
}

TEST(Bvh, HintDoesNotChangeAnswer) {
    const TriMesh m = test::torus(0.5, 0.2, 32, 16);
    const Bvh bvh(m);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<std::uint32_t> tri(0, static_cast<std::uint32_t>(m.faces.size() - 1));
    for (int i = 0; i < 500; ++i) {
        const Vec3 x(u(rng), u(rng), u(rng));
        EXPECT_EQ(bvh.closest(x, tri(rng)).distance, bvh.closest(x).distance);
    }
}

TEST(Bvh, TriangleClosestPointRegions) {
    const Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 2, 0);
    EXPECT_EQ(closest_point_on_triangle(Vec3(-1, -1, 3), a, b, c), a);
    EXPECT_EQ(closest_point_on_triangle(Vec3(3, -1, 0), a, b, c), b);
    EXPECT_EQ(closest_point_on_triangle(Vec3(1, -1, 0), a, b, c), Vec3(1, 0, 0));
    EXPECT_NEAR((closest_point_on_triangle(Vec3(2, 2, 0), a, b, c) - Vec3(1, 1, 0)).norm(), 0.0, 1e-15);
    EXPECT_EQ(closest_point_on_triangle(Vec3(0.5, 0.5, -4), a, b, c), Vec3(0.5, 0.5, 0));
}

TEST(Bvh, LipschitzUnitGradientAndDirectionalDerivative) {
    const TriMesh m = test::torus(0.5, 0.2, 24, 12);
    const Bvh bvh(m);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int fd_checked = 0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
        const double da = bvh.closest(a).distance, db = bvh.closest(b).distance;
        EXPECT_LE(std::abs(da - db), (a - b).norm() + 1e-15);
        const UdfGradient g = udf_gradient(bvh, a);
        if (!g.defined) continue;
        EXPECT_NEAR(g.direction.norm(), 1.0, 1e-9);
        const double step = 1e-4;
        if (da > 10 * step) {
            EXPECT_NEAR((bvh.closest(a + step * g.direction).distance - da) / step, 1.0, 1e-2);
            ++fd_checked;
        }
    }
    EXPECT_GT(fd_checked, 500);
}

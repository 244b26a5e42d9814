#include <gtest/gtest.h>

#include <bit>
#include <random>

#include <sparcubes/sign_field.hpp>
#include <sparcubes/surface_extract.hpp>

#include "support/oracles.hpp"
#include "support/shapes.hpp"

using namespace sparcubes;

namespace {

struct Labelled {
    SparseGrid grid;
    OccupancyMask mask;
};

Labelled label(const TriMesh& m, int R) {
    const Bvh bvh(m);
    Labelled out{extract_active_voxels(bvh, R), {}};
    out.mask = flood_fill(out.grid);
    return out;
}

} // namespace

// Corners of free cells (outside the band) agree with ray parity on closed inputs.
TEST(SignField, FloodFillMatchesRayParity) {
    const std::vector<TriMesh> meshes = {test::icosphere(0.6, 3), test::torus(0.5, 0.2, 32, 16),
                                         test::merged(test::box(Vec3(-0.9, -0.9, -0.9), Vec3(-0.1, 0.2, 0.3)),
                                                      test::icosphere(0.25, 2, Vec3(0.5, 0.5, 0.5)))};
    std::mt19937_64 rng(3);
    std::size_t checked = 0;
    for (const TriMesh& m : meshes) {
        const Labelled l = label(m, 64);
        const int R = 64;
        std::uniform_int_distribution<int> u(0, R);
        int taken = 0;
        while (taken < 4000) {
            const Vec3i c(u(rng), u(rng), u(rng));
            const auto idx = corner_index(l.grid, CornerKey::pack(c));
            if (idx) continue;  // inside the band
            const Vec3 x = l.grid.lattice_position(c);
            ASSERT_EQ(l.mask.corner_label(c) == 1, test::ray_parity_inside(m, x)) << x.transpose();
            ++taken;
        }
        checked += taken;
    }
    EXPECT_GE(checked, 10000u);
}

TEST(SignField, AssembleSdfIsCornerExact) {
    Labelled l = label(test::icosphere(0.5, 3), 64);
    assemble_sdf(l.grid);
    std::size_t interior = 0;
    for (std::size_t v = 0; v < l.grid.corner_count(); ++v) {
        EXPECT_EQ(std::abs(l.grid.phi[v]), l.grid.udf[v]);
        EXPECT_EQ(std::signbit(l.grid.phi[v]), l.grid.sign[v] == 1);
        interior += l.grid.sign[v];
    }
    EXPECT_GT(interior, 0u);
}

TEST(SignField, ZeroUdfInteriorCornerIsNegativeZero) {
    SparseGrid g = make_grid(64, 2.0, {Vec3i(1, 1, 1)});
    g.sign.assign(g.corner_count(), 1);
    assemble_sdf(g);
    EXPECT_TRUE(std::signbit(g.phi[0]));
    EXPECT_LT(tie_broken(g.phi[0]), 0.0);
    EXPECT_GT(tie_broken(0.0), 0.0);
}

TEST(SignField, FloodFillVisitsAtMostAllCells) {
    const Labelled l = label(test::icosphere(0.5, 3), 64);
    EXPECT_LE(l.mask.reached_count() + l.mask.blocked_count(), 64u * 64u * 64u);
    EXPECT_GT(l.mask.reached_count(), 0u);
}

TEST(SignField, EnclosedPocketIsInterior) {
    // Hollow shell: a pocket inside a closed box surface, away from the band.
    const Labelled l = label(test::box(Vec3(-0.8, -0.8, -0.8), Vec3(0.8, 0.8, 0.8)), 64);
    EXPECT_EQ(l.mask.label(32, 32, 32), CellLabel::Interior);
    EXPECT_EQ(l.mask.label(1, 1, 1), CellLabel::Exterior);
    EXPECT_EQ(l.mask.label(-1, 5, 5), CellLabel::Exterior);
}

TEST(SignField, ZeroEtaLeavesSignsUnchanged) {
    const TriMesh m = test::disc(0.7, 32, 4);
    const Bvh bvh(m);
    SparseGrid g = extract_active_voxels(bvh, 64);
    const OccupancyMask mask = flood_fill(g);
    assemble_sdf(g);
    const auto sign = g.sign;
    const auto phi = g.phi;
    const SignRefineReport r = refine_signs(g, bvh, mask, {0.0, 1.0});
    EXPECT_EQ(g.sign, sign);
    for (std::size_t v = 0; v < phi.size(); ++v) EXPECT_EQ(std::bit_cast<std::uint64_t>(g.phi[v]), std::bit_cast<std::uint64_t>(phi[v]));
    EXPECT_EQ(r.flipped_to_exterior, 0u);
}

TEST(SignField, RefinementPreservesMagnitudes) {
    const TriMesh m = test::icosphere(0.5, 3);
    const Bvh bvh(m);
    SparseGrid g = extract_active_voxels(bvh, 64, 3.0);
    const OccupancyMask mask = flood_fill(g);
    assemble_sdf(g);
    refine_signs(g, bvh, mask, {g.h(), 1.0});
    for (std::size_t v = 0; v < g.corner_count(); ++v) {
        EXPECT_EQ(std::abs(g.phi[v]), g.udf[v]);
        EXPECT_EQ(std::signbit(g.phi[v]), g.sign[v] == 1);
    }
}

// A thin closed sphere buries corners on both sides; refinement must recover the
// parity answer for every buried corner farther than h from the surface.
TEST(SignField, RefinementRecoversBuriedCornersOfClosedSurface) {
    const TriMesh m = test::icosphere(0.5, 3);
    const Bvh bvh(m);
    SparseGrid g = extract_active_voxels(bvh, 64, 4.0);
    const OccupancyMask mask = flood_fill(g);
    assemble_sdf(g);
    const SignRefineReport r = refine_signs(g, bvh, mask, {g.h(), 1.0});
    EXPECT_GT(r.ambiguous, 0u);
    EXPECT_GT(r.flipped_to_exterior, 0u);
    std::size_t wrong = 0;
    for (std::size_t v = 0; v < g.corner_count(); ++v) {
        if (g.udf[v] < g.h()) continue;
        const bool inside = g.corner_position(static_cast<std::uint32_t>(v)).norm() < 0.5;
        wrong += (g.sign[v] == 1) != inside;
    }
    EXPECT_EQ(wrong, 0u);
}

TEST(SignField, OpenSurfaceClosesAfterRefinement) {
    for (const TriMesh& m : {test::disc(0.8, 48, 6), test::open_cylinder(0.5, -0.6, 0.6, 32, 6),
                             test::punch_hole(test::icosphere(0.6, 3), Vec3(0, 0, 0.6), 0.2)}) {
        const Bvh bvh(m);
        SparseGrid g = extract_active_voxels(bvh, 64);
        const OccupancyMask mask = flood_fill(g);
        assemble_sdf(g);
        refine_signs(g, bvh, mask, {g.h(), 1.0});
        const TriMesh out = marching_cubes(g).mesh;
        EXPECT_GT(out.faces.size(), 0u);
        EXPECT_EQ(test::count_boundary_edges(out), 0u);
    }
}

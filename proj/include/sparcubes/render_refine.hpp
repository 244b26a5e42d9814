#pragma once

// Multi-view depth and normal refinement of corner deformations.
//
// Hard z-buffer rasterization with flat face normals (world space, flipped to
// face the camera). Gradients flow pixel -> face -> vertex -> corner through
// perspective-correct barycentrics and the extraction Jacobian; silhouette
// pixels add a constant penalty but no gradient.

#include <cmath>
#include <numbers>

#include "deform_opt.hpp"
#include "surface_extract.hpp"

namespace sparcubes {

struct Camera {
    Vec3 position = Vec3(0, 0, 2.5);
    Vec3 target = Vec3::Zero();
    Vec3 up = Vec3(0, 1, 0);
    double fov = 0.8;  // vertical, radians
    int width = 512;
    int height = 512;

    void validate() const {
        if (!((target - position).norm() > 0.0)) throw Error("camera look direction is zero");
        if (!(fov > 0.0 && fov < std::numbers::pi)) throw Error("camera fov must lie in (0, pi)");
        if (width < 1 || height < 1) throw Error("camera image size must be positive");
        if (!(forward().cross(up).norm() > 1e-12)) throw Error("camera up is parallel to the look direction");
    }
    Vec3 forward() const { return (target - position).normalized(); }
    Vec3 right() const { return forward().cross(up).normalized(); }
    Vec3 true_up() const { return right().cross(forward()); }
    double focal() const { return 0.5 * height / std::tan(0.5 * fov); }

    /// World direction through the centre of pixel (x, y), scaled so its
    /// forward component is 1 (moving s along it changes depth by s).
    Vec3 pixel_ray(int x, int y) const {
        const double f = focal();
        const double sx = (x + 0.5 - 0.5 * width) / f, sy = (0.5 * height - (y + 0.5)) / f;
        return forward() + sx * right() + sy * true_up();
    }
};

/// Rendered or observed images. Depth is camera-space z (+inf background);
/// normals are unit world vectors (zero background).
struct RenderTarget {
    int width = 0, height = 0;
    std::vector<double> depth;
    std::vector<Vec3> normal;
    std::vector<std::uint8_t> mask;
    std::vector<std::int32_t> face;  // -1 background
    std::vector<Vec3> bary;          // perspective-correct barycentrics of `face`

    RenderTarget() = default;
    RenderTarget(int w, int h)
        : width(w), height(h), depth(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity()),
          normal(static_cast<std::size_t>(w) * h, Vec3::Zero()), mask(static_cast<std::size_t>(w) * h, 0),
          face(static_cast<std::size_t>(w) * h, -1), bary(static_cast<std::size_t>(w) * h, Vec3::Zero()) {}

    std::size_t pixels() const { return depth.size(); }
    std::size_t coverage() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
};

inline constexpr double kNearPlane = 1e-6;

/// Flat normal of face f oriented toward the camera, and its raw cross product.
inline Vec3 facing_normal(const TriMesh& mesh, std::size_t f, const Camera& cam, double* sign = nullptr) {
    const Face& t = mesh.faces[f];
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    const double s = n.dot(cam.position - mesh.vertices[t[0]]) >= 0.0 ? 1.0 : -1.0;
    if (sign) *sign = s;
    const double len = n.norm();
    return len > 0.0 ? Vec3(s * n / len) : Vec3::Zero();
}

inline RenderTarget rasterize(const TriMesh& mesh, const Camera& cam) {
    cam.validate();
    RenderTarget rt(cam.width, cam.height);
    const Vec3 fw = cam.forward(), rg = cam.right(), up = cam.true_up();
    const double focal = cam.focal();

    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& t = mesh.faces[f];
        double sx[3], sy[3], z[3];
        bool behind = false;
        for (int k = 0; k < 3; ++k) {
            const Vec3 c = mesh.vertices[t[k]] - cam.position;
            z[k] = c.dot(fw);
            if (z[k] <= kNearPlane) behind = true;
            sx[k] = 0.5 * cam.width + focal * c.dot(rg) / z[k];
            sy[k] = 0.5 * cam.height - focal * c.dot(up) / z[k];
        }
        if (behind) continue;
        const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
        if (area == 0.0 || !std::isfinite(area)) continue;
        const Vec3 n = facing_normal(mesh, f, cam);
        if (n.isZero()) continue;

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({sx[0], sx[1], sx[2]}))));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max({sx[0], sx[1], sx[2]}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({sy[0], sy[1], sy[2]}))));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max({sy[0], sy[1], sy[2]}))));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                double l[3];
                for (int k = 0; k < 3; ++k) {
                    const int a = (k + 1) % 3, b = (k + 2) % 3;
                    l[k] = ((sx[b] - sx[a]) * (py - sy[a]) - (px - sx[a]) * (sy[b] - sy[a])) / area;
                }
                if (l[0] < 0.0 || l[1] < 0.0 || l[2] < 0.0) continue;
                const double w0 = l[0] / z[0], w1 = l[1] / z[1], w2 = l[2] / z[2];
                const double inv = w0 + w1 + w2;
                const double depth = 1.0 / inv;
                const std::size_t i = static_cast<std::size_t>(y) * cam.width + x;
                if (depth < rt.depth[i]) {
                    rt.depth[i] = depth;
                    rt.normal[i] = n;
                    rt.mask[i] = 1;
                    rt.face[i] = static_cast<std::int32_t>(f);
                    rt.bary[i] = Vec3(w0, w1, w2) / inv;
                }
            }
    }
    return rt;
}

struct RenderLoss {
    double total = 0.0;
    double depth_mse = 0.0;
    double normal_mse = 0.0;
    double mismatch_fraction = 0.0;
    std::size_t overlap = 0;
    std::vector<double> residual;  // per-pixel squared depth + normal error on the overlap
};

/// Depth MSE + normal MSE over pixels both images cover, plus
/// penalty_weight * (fraction of pixels covered by exactly one image).
inline RenderLoss render_loss(const RenderTarget& rendered, const RenderTarget& observed, double penalty_weight = 1.0) {
    if (rendered.width != observed.width || rendered.height != observed.height)
        throw Error("render_loss: image sizes differ");
    RenderLoss out;
    const std::size_t n = rendered.pixels();
    out.residual.assign(n, 0.0);
    std::size_t mismatch = 0;
    double ds = 0.0, ns = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool a = rendered.mask[i], b = observed.mask[i];
        if (a != b) ++mismatch;
        if (!(a && b)) continue;
        ++out.overlap;
        const double dd = rendered.depth[i] - observed.depth[i];
        const double dn = (rendered.normal[i] - observed.normal[i]).squaredNorm();
        ds += dd * dd;
        ns += dn;
        out.residual[i] = dd * dd + dn;
    }
    if (out.overlap) {
        out.depth_mse = ds / static_cast<double>(out.overlap);
        out.normal_mse = ns / static_cast<double>(out.overlap);
    }
    out.mismatch_fraction = n ? static_cast<double>(mismatch) / static_cast<double>(n) : 0.0;
    out.total = out.depth_mse + out.normal_mse + penalty_weight * out.mismatch_fraction;
    return out;
}

/// d(loss)/d(vertex) for one view, ignoring silhouette changes. When
/// `curvature` is given it receives the per-vertex Gauss-Newton diagonal of
/// the depth term.
inline std::vector<Vec3> render_vertex_gradient(const TriMesh& mesh, const Camera& cam, const RenderTarget& rendered,
                                                const RenderTarget& observed, const RenderLoss& loss,
                                                std::vector<double>* curvature = nullptr) {
    std::vector<Vec3> grad(mesh.vertices.size(), Vec3::Zero());
    if (curvature) curvature->assign(mesh.vertices.size(), 0.0);
    if (loss.overlap == 0) return grad;
    const double scale = 1.0 / static_cast<double>(loss.overlap);
    for (int y = 0; y < rendered.height; ++y)
        for (int x = 0; x < rendered.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * rendered.width + x;
            if (!(rendered.mask[i] && observed.mask[i])) continue;
            const auto f = static_cast<std::size_t>(rendered.face[i]);
            const Face& t = mesh.faces[f];
            const Vec3 &p0 = mesh.vertices[t[0]], &p1 = mesh.vertices[t[1]], &p2 = mesh.vertices[t[2]];
            const Vec3 e1 = p1 - p0, e2 = p2 - p0;
            const Vec3 n = e1.cross(e2);
            const double len = n.norm();
            const Vec3 nh = n / len;
            const Vec3 d = cam.pixel_ray(x, y);

            // Depth: the pixel ray meets the plane at z; moving p_k shifts it by b_k n.dp / n.d.
            const double gz = 2.0 * scale * (rendered.depth[i] - observed.depth[i]);
            const double nd = nh.dot(d);
            if (std::abs(nd) > 1e-12) {
                const Vec3 dz = (gz / nd) * nh;
                for (int k = 0; k < 3; ++k) {
                    grad[t[k]] += rendered.bary[i][k] * dz;
                    if (curvature) {
                        const double w = rendered.bary[i][k] / nd;
                        (*curvature)[t[k]] += 2.0 * scale * w * w;
                    }
                }
            }

            // Normal: rendered normal is s * n / |n|.
            double s = 1.0;
            facing_normal(mesh, f, cam, &s);
            const Vec3 gn = 2.0 * scale * s * (rendered.normal[i] - observed.normal[i]);
            const Vec3 w = (gn - nh * nh.dot(gn)) / len;
            grad[t[0]] += w.cross(p2 - p1);
            grad[t[1]] += e2.cross(w);
            grad[t[2]] += w.cross(e1);
        }
    return grad;
}

/// Cameras on icosahedral directions (12 vertices, then 20 face centres)
/// looking at the origin; the first `count` are returned.
inline std::vector<Camera> default_rig(int count = 16, double radius = 2.5, double fov = 0.8, int image_size = 512) {
    if (count < 1 || count > 32) throw Error("camera rig supports 1 to 32 views");
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    const std::vector<Vec3> verts = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                                     {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    static constexpr int kFaces[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                          {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                          {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                          {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    std::vector<Vec3> dirs;
    for (const Vec3& v : verts) dirs.push_back(v.normalized());
    for (const auto& f : kFaces) dirs.push_back((verts[f[0]] + verts[f[1]] + verts[f[2]]).normalized());
    std::vector<Camera> rig;
    for (int i = 0; i < count; ++i) {
        Camera cam;
        cam.position = radius * dirs[i];
        cam.up = std::abs(dirs[i][1]) > 0.99 ? Vec3(0, 0, 1) : Vec3(0, 1, 0);
        cam.fov = fov;
        cam.width = cam.height = image_size;
        rig.push_back(cam);
    }
    return rig;
}

struct RenderRefineConfig {
    int iterations = 20;
    double step_size = 0.0;  // max corner move per iteration; 0 selects 0.1 h
    double penalty_weight = 1.0;
    int max_backoffs = 12;
};

/// Smallest trial move, in units of h, worth a render evaluation.
inline constexpr double kMinRenderStep = 1e-6;

struct RenderRefineReport {
    std::vector<DeformTraceRow> rows;  // iteration, mean view loss, step
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t visible_cubes = 0;
    std::size_t skipped_views = 0;
    std::vector<std::uint8_t> updatable;  // per corner
};

/// Mean view loss of the grid's current extraction against fixed observations.
struct RenderEvaluation {
    double loss = 0.0;
    std::vector<RenderTarget> rendered;
    std::vector<RenderLoss> losses;
};

inline RenderEvaluation evaluate_render(const TriMesh& mesh, const std::vector<Camera>& cams,
                                        const std::vector<RenderTarget>& observed, double penalty_weight) {
    RenderEvaluation ev;
    ev.rendered.resize(cams.size());
    ev.losses.resize(cams.size());
    parallel_for(0, cams.size(), [&](std::size_t v) {
        ev.rendered[v] = rasterize(mesh, cams[v]);
        ev.losses[v] = render_loss(ev.rendered[v], observed[v], penalty_weight);
    }, 1);
    for (const auto& l : ev.losses) ev.loss += l.total;
    ev.loss /= static_cast<double>(cams.size());
    return ev;
}

/// Step 4. Observations are rasterizations of `raw_mesh` (same frame as the
/// grid). Only corners of cubes that own a triangle visible in some view
/// move; a step that does not lower the loss is halved up to max_backoffs
/// times, or until it falls below kMinRenderStep h, and otherwise rejected.
inline RenderRefineReport refine_with_views(SparseGrid& grid, const TriMesh& raw_mesh, const std::vector<Camera>& cams,
                                            const RenderRefineConfig& cfg = {}, Diagnostics* diag = nullptr) {
    if (grid.phi.size() != grid.corners.size()) throw Error("refine_with_views needs an assembled phi");
    if (cams.empty()) throw Error("refine_with_views needs at least one camera");
    if (grid.delta.size() != grid.corners.size()) grid.delta.assign(grid.corners.size(), Vec3::Zero());
    const double step_cap = cfg.step_size > 0.0 ? cfg.step_size : 0.1 * grid.h();

    std::vector<RenderTarget> observed(cams.size());
    parallel_for(0, cams.size(), [&](std::size_t v) { observed[v] = rasterize(raw_mesh, cams[v]); }, 1);

    const ExtractionTopology topo = extract_topology(grid);
    TriMesh mesh;
    mesh.faces = topo.faces;
    mesh.vertices = vertex_positions(grid, topo);

    RenderRefineReport report;
    RenderEvaluation ev = evaluate_render(mesh, cams, observed, cfg.penalty_weight);
    report.initial_loss = ev.loss;
    report.rows.push_back({0, ev.loss, 0.0});

    // Visible cubes from the starting extraction.
    std::vector<std::uint8_t> visible_cube(grid.cubes.size(), 0);
    std::vector<std::uint8_t> active_view(cams.size(), 1);
    for (std::size_t v = 0; v < cams.size(); ++v) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < ev.rendered[v].pixels(); ++i)
            if (ev.rendered[v].face[i] >= 0) {
                visible_cube[topo.face_cube[static_cast<std::size_t>(ev.rendered[v].face[i])]] = 1;
                ++hits;
            }
        if (hits == 0) {
            active_view[v] = 0;
            ++report.skipped_views;
            warn(diag, "render refine: view " + std::to_string(v) + " sees no voxels, skipped");
        }
    }
    report.updatable.assign(grid.corners.size(), 0);
    for (std::size_t c = 0; c < grid.cubes.size(); ++c)
        if (visible_cube[c]) {
            ++report.visible_cubes;
            for (std::uint32_t k : grid.cube_corners[c]) report.updatable[k] = 1;
        }

    std::vector<std::uint32_t> movable;
    for (std::uint32_t c = 0; c < grid.corners.size(); ++c)
        if (report.updatable[c]) movable.push_back(c);
    std::vector<Vec3> saved(movable.size());
    std::vector<Vec3> direction(grid.corners.size(), Vec3::Zero());
    double scale = 0.5;

    for (int it = 1; it <= cfg.iterations && ev.loss > 0.0; ++it) {
        std::vector<std::vector<Vec3>> per_view(cams.size());
        std::vector<std::vector<double>> per_view_curv(cams.size());
        parallel_for(0, cams.size(), [&](std::size_t v) {
            if (active_view[v])
                per_view[v] = render_vertex_gradient(mesh, cams[v], ev.rendered[v], observed[v], ev.losses[v],
                                                     &per_view_curv[v]);
        }, 1);
        std::vector<Vec3> grad(grid.corners.size(), Vec3::Zero());
        std::vector<double> curv(grid.corners.size(), 0.0);
        const double inv_views = 1.0 / static_cast<double>(cams.size());
        for (std::size_t v = 0; v < cams.size(); ++v) {
            if (per_view[v].empty()) continue;
            for (std::size_t p = 0; p < topo.vertex_count(); ++p) {
                const Vec3 g = inv_views * per_view[v][p];
                const double c = inv_views * per_view_curv[v][p];
                const double ta = 1.0 - topo.t[p], tb = topo.t[p];
                grad[topo.corner_a[p]] += ta * g;
                grad[topo.corner_b[p]] += tb * g;
                curv[topo.corner_a[p]] += ta * ta * c;
                curv[topo.corner_b[p]] += tb * tb * c;
            }
        }
        // Jacobi-scaled direction: depth residuals are tiny next to normal
        // residuals, so raw gradient steps tilt faces before they translate them.
        double longest = 0.0;
        for (std::uint32_t c : movable) {
            direction[c] = curv[c] > 0.0 ? Vec3(-grad[c] / curv[c]) : Vec3::Zero();
            direction[c] = direction[c].cwiseMax(Vec3::Constant(-step_cap)).cwiseMin(Vec3::Constant(step_cap));
            longest = std::max(longest, direction[c].lpNorm<Eigen::Infinity>());
        }
        if (longest == 0.0) break;

        for (std::size_t k = 0; k < movable.size(); ++k) saved[k] = grid.delta[movable[k]];
        bool accepted = false;
        double alpha = scale;
        for (int b = 0; b <= cfg.max_backoffs && alpha * longest >= kMinRenderStep * grid.h(); ++b, alpha *= 0.5) {
            for (std::size_t k = 0; k < movable.size(); ++k)
                grid.set_delta(movable[k], saved[k] + alpha * direction[movable[k]]);
            TriMesh trial_mesh;
            trial_mesh.faces = topo.faces;
            trial_mesh.vertices = vertex_positions(grid, topo);
            RenderEvaluation trial = evaluate_render(trial_mesh, cams, observed, cfg.penalty_weight);
            if (trial.loss < ev.loss) {
                ev = std::move(trial);
                mesh = std::move(trial_mesh);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            for (std::size_t k = 0; k < movable.size(); ++k) grid.delta[movable[k]] = saved[k];
            break;
        }
        report.rows.push_back({it, ev.loss, alpha * longest});
        scale = std::min(1.0, 1.25 * alpha);
    }
    report.final_loss = ev.loss;
    return report;
}

/// Depth mapped to [0, 255] over the valid range (background 0, near bright).
inline std::vector<std::uint8_t> depth_to_gray(const RenderTarget& rt) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < rt.pixels(); ++i)
        if (rt.mask[i]) lo = std::min(lo, rt.depth[i]), hi = std::max(hi, rt.depth[i]);
    std::vector<std::uint8_t> img(rt.pixels(), 0);
    for (std::size_t i = 0; i < rt.pixels(); ++i)
        if (rt.mask[i]) {
            const double u = hi > lo ? (rt.depth[i] - lo) / (hi - lo) : 0.0;
            img[i] = static_cast<std::uint8_t>(std::lround(255.0 - 223.0 * u));
        }
    return img;
}

/// Normals mapped from [-1, 1] to RGB.
inline std::vector<std::uint8_t> normal_to_rgb(const RenderTarget& rt) {
    std::vector<std::uint8_t> img(3 * rt.pixels(), 0);
    for (std::size_t i = 0; i < rt.pixels(); ++i)
        if (rt.mask[i])
            for (int c = 0; c < 3; ++c)
                img[3 * i + c] = static_cast<std::uint8_t>(std::lround(127.5 * (rt.normal[i][c] + 1.0)));
    return img;
}

} // namespace sparcubes

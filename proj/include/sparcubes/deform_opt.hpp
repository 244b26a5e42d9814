#pragma once

// Corner deformation fitting.
//
// Minimises L = mean_p UDF(p)^2 over the extracted vertices and face
// centroids p, each a fixed blend of deformed corner positions. Phi is never touched, so
// the extraction topology is computed once and only positions move.

#include <cmath>
#include <fstream>
#include <optional>

#include "bvh.hpp"
#include "surface_extract.hpp"

namespace sparcubes {

struct DeformConfig {
    int iterations = 100;
    double step_size = 0.0;         // max corner move per iteration; 0 selects 0.3 h
    double convergence_tol = 1e-4;  // relative loss change over `window` iterations
    int window = 10;
    int max_backoffs = 5;
    bool face_centroids = true;     // also fit face centroids, not only vertices
};

struct DeformTraceRow {
    int iteration = 0;
    double loss = 0.0;
    double step = 0.0;  // largest corner move actually taken
};

struct DeformTrace {
    std::vector<DeformTraceRow> rows;
    bool converged = false;
    double initial_loss = 0.0;
    double final_loss = 0.0;

    void write_csv(std::ostream& out) const {
        out << "iteration,loss,step_size\n";
        out.precision(12);
        for (const auto& r : rows) out << r.iteration << ',' << r.loss << ',' << r.step << '\n';
    }
    void write_csv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw Error("cannot write trace " + path.string());
        write_csv(out);
    }
};

/// Points whose distance to the input is fitted: every extracted vertex and,
/// optionally, every face centroid. Each point is a fixed linear combination
/// of deformed corner positions, stored row-wise.
struct FitPoints {
    std::vector<std::uint32_t> offsets{0};
    std::vector<std::uint32_t> corner;
    std::vector<double> weight;

    std::size_t size() const { return offsets.size() - 1; }

    void add(std::initializer_list<std::pair<std::uint32_t, double>> terms) {
        for (const auto& [c, w] : terms) corner.push_back(c), weight.push_back(w);
        offsets.push_back(static_cast<std::uint32_t>(corner.size()));
    }
};

inline FitPoints fit_points(const ExtractionTopology& topo, bool face_centroids) {
    FitPoints pts;
    for (std::size_t v = 0; v < topo.vertex_count(); ++v)
        pts.add({{topo.corner_a[v], 1.0 - topo.t[v]}, {topo.corner_b[v], topo.t[v]}});
    if (face_centroids)
        for (const Face& f : topo.faces) {
            for (std::uint32_t v : f) {
                pts.corner.push_back(topo.corner_a[v]);
                pts.weight.push_back((1.0 - topo.t[v]) / 3.0);
                pts.corner.push_back(topo.corner_b[v]);
                pts.weight.push_back(topo.t[v] / 3.0);
            }
            pts.offsets.push_back(static_cast<std::uint32_t>(pts.corner.size()));
        }
    return pts;
}

/// Residual state of the fitting loss at the grid's current deformation.
struct FitState {
    std::vector<Vec3> positions;
    std::vector<Vec3> closest;
    std::vector<std::uint32_t> tri;  // warm-start hints for the next query
    double loss = 0.0;
};

inline FitState evaluate_fit(const SparseGrid& grid, const FitPoints& pts, const Bvh& bvh,
                             const std::vector<std::uint32_t>* hints = nullptr) {
    FitState s;
    const std::size_t n = pts.size();
    s.positions.resize(n);
    s.closest.resize(n);
    s.tri.resize(n);
    std::vector<double> sq(n);
    const bool corner_hints = grid.closest_tri.size() == grid.corners.size();
    parallel_for(0, n, [&](std::size_t i) {
        Vec3 p = Vec3::Zero();
        for (std::uint32_t k = pts.offsets[i]; k < pts.offsets[i + 1]; ++k)
            p += pts.weight[k] * grid.deformed_position(pts.corner[k]);
        std::optional<std::uint32_t> hint;
        if (hints) hint = (*hints)[i];
        else if (corner_hints) hint = grid.closest_tri[pts.corner[pts.offsets[i]]];
        const UdfResult r = bvh.closest(p, hint);
        s.positions[i] = p;
        s.closest[i] = r.closest;
        s.tri[i] = r.tri;
        sq[i] = r.distance * r.distance;
    }, 256);
    double sum = 0.0;
    for (double d : sq) sum += d;
    s.loss = n ? sum / static_cast<double>(n) : 0.0;
    return s;
}

/// dL/d(delta) per corner: (2/N) sum_p (p - closest(p)) * dp/d(delta).
inline std::vector<Vec3> fit_gradient(const SparseGrid& grid, const FitPoints& pts, const FitState& s) {
    std::vector<Vec3> grad(grid.corners.size(), Vec3::Zero());
    const std::size_t n = pts.size();
    if (n == 0) return grad;
    const double scale = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 r = scale * (s.positions[i] - s.closest[i]);
        for (std::uint32_t k = pts.offsets[i]; k < pts.offsets[i + 1]; ++k) grad[pts.corner[k]] += pts.weight[k] * r;
    }
    return grad;
}

/// Diagonal of the Gauss-Newton matrix per corner: (2/N) sum_p w^2.
inline std::vector<double> fit_curvature(const SparseGrid& grid, const FitPoints& pts) {
    std::vector<double> diag(grid.corners.size(), 0.0);
    const std::size_t n = pts.size();
    if (n == 0) return diag;
    const double scale = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::uint32_t k = pts.offsets[i]; k < pts.offsets[i + 1]; ++k)
            diag[pts.corner[k]] += scale * pts.weight[k] * pts.weight[k];
    return diag;
}

/// Step 3. Descent direction is the gradient scaled by the inverse J^T J
/// diagonal, clamped per corner so none moves more than step_size per axis. A
/// step that raises the loss is halved up to max_backoffs times and otherwise
/// rejected, so the recorded loss never increases.
inline DeformTrace optimize_deformation(SparseGrid& grid, const Bvh& bvh, const DeformConfig& cfg = {}) {
    if (grid.phi.size() != grid.corners.size()) throw Error("optimize_deformation needs an assembled phi");
    if (cfg.iterations < 1) throw Error("deformation iterations must be >= 1");
    const double h = grid.h();
    const double step_cap = cfg.step_size > 0.0 ? cfg.step_size : 0.3 * h;
    if (step_cap >= grid.max_delta()) throw Error("deformation step must be below the h/2 clamp");
    if (grid.delta.size() != grid.corners.size()) grid.delta.assign(grid.corners.size(), Vec3::Zero());

    const ExtractionTopology topo = extract_topology(grid);
    const FitPoints pts = fit_points(topo, cfg.face_centroids);
    const std::vector<double> curvature = fit_curvature(grid, pts);
    DeformTrace trace;
    FitState state = evaluate_fit(grid, pts, bvh);
    trace.initial_loss = state.loss;
    trace.rows.push_back({0, state.loss, 0.0});
    // Residuals of 1e-12 h are rounding noise in the vertex positions.
    if (topo.vertex_count() == 0 || state.loss <= 1e-24 * h * h) {
        trace.final_loss = state.loss;
        trace.converged = true;
        return trace;
    }

    std::vector<std::uint32_t> touched;
    for (std::uint32_t c = 0; c < curvature.size(); ++c)
        if (curvature[c] > 0.0) touched.push_back(c);

    std::vector<Vec3> direction(grid.corners.size(), Vec3::Zero());
    std::vector<Vec3> saved(touched.size());
    // Damped Jacobi: neighbouring corners move together, so full steps overshoot.
    double scale = 0.5;
    for (int it = 1; it <= cfg.iterations; ++it) {
        const std::vector<Vec3> grad = fit_gradient(grid, pts, state);
        double longest = 0.0;
        for (std::uint32_t c : touched) {
            direction[c] = (-grad[c] / curvature[c]).cwiseMax(Vec3::Constant(-step_cap)).cwiseMin(Vec3::Constant(step_cap));
            longest = std::max(longest, direction[c].lpNorm<Eigen::Infinity>());
        }
        if (longest == 0.0) {
            trace.converged = true;
            break;
        }
        double alpha = scale;
        for (std::size_t k = 0; k < touched.size(); ++k) saved[k] = grid.delta[touched[k]];

        bool accepted = false;
        for (int b = 0; b <= cfg.max_backoffs; ++b, alpha *= 0.5) {
            for (std::size_t k = 0; k < touched.size(); ++k)
                grid.set_delta(touched[k], saved[k] + alpha * direction[touched[k]]);
            FitState trial = evaluate_fit(grid, pts, bvh, &state.tri);
            if (trial.loss <= state.loss) {
                state = std::move(trial);
                accepted = true;
                scale = std::min(1.0, 1.25 * alpha);
                break;
            }
        }
        if (!accepted) {
            for (std::size_t k = 0; k < touched.size(); ++k) grid.delta[touched[k]] = saved[k];
            trace.rows.push_back({it, state.loss, 0.0});
            trace.converged = true;
            break;
        }
        trace.rows.push_back({it, state.loss, alpha * longest});

        if (it >= cfg.window) {
            const double before = trace.rows[trace.rows.size() - 1 - cfg.window].loss;
            if (before - state.loss <= cfg.convergence_tol * before) {
                trace.converged = true;
                break;
            }
        }
    }
    trace.final_loss = state.loss;
    return trace;
}

} // namespace sparcubes

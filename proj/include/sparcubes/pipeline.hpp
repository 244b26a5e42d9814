#pragma once

// End-to-end remeshing: raw mesh in, watertight mesh out.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>

#include "deform_opt.hpp"
#include "hole_fill.hpp"
#include "metrics.hpp"
#include "render_refine.hpp"
#include "sign_field.hpp"
#include "sparse_grid.hpp"
#include "surface_extract.hpp"

namespace sparcubes {

struct PipelineConfig {
    int resolution = 512;
    double band = kDefaultBand;
    double eta = 1.0;  // sign-refinement step in multiples of h
    double sheet_half_width = 1.0;
    DeformConfig deform;
    bool render_refine = false;
    int views = 16;
    int image_size = 512;
    RenderRefineConfig render;
    std::size_t max_loop = kDefaultMaxLoop;
    bool fill_cavities = false;
    bool normalize = true;  // false: the input already lies in the canonical frame
    std::size_t threads = 0;
    std::filesystem::path cache_dir;

    void validate() const {
        if (resolution < kMinResolution || resolution > kMaxResolution)
            throw Error("resolution must lie in [64, 1024]");
        if (!(band >= 1.0)) throw Error("band must be at least 1.0");
        if (!(eta >= 0.0)) throw Error("eta must be non-negative");
        if (deform.iterations < 1) throw Error("deformation iterations must be >= 1");
        if (deform.step_size >= 0.5 * 2.0 / resolution) throw Error("deformation step must be below h/2");
        if (render_refine && (views < 1 || views > 32)) throw Error("views must lie in [1, 32]");
        if (render_refine && image_size < 1) throw Error("image size must be positive");
        if (max_loop < 3) throw Error("max loop must be at least 3");
    }
};

struct StageTimings {
    std::vector<std::pair<std::string, double>> stages;  // seconds

    double total() const {
        double t = 0.0;
        for (const auto& s : stages) t += s.second;
        return t;
    }
    std::string to_text() const {
        std::ostringstream out;
        out << std::fixed << std::setprecision(3);
        for (const auto& [name, sec] : stages) out << std::setw(22) << std::left << name << sec << " s\n";
        out << std::setw(22) << std::left << "total" << total() << " s\n";
        return out.str();
    }
};

struct RemeshResult {
    TriMesh mesh;  // original coordinates
    SparseGrid grid;
    NormTransform transform;
    StageTimings timings;
    SignRefineReport signs;
    DeformTrace deform;
    std::optional<RenderRefineReport> render;
    HoleFillReport holes;
    std::size_t cavities_removed = 0;
    std::size_t ambiguous_cubes = 0;
    bool cache_hit = false;
    Diagnostics diagnostics;
};

namespace detail {

/// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 1099511628211ull;
    return h;
}

inline std::uint64_t udf_cache_key(const TriMesh& mesh, int resolution, double band) {
    std::uint64_t h = fnv1a(mesh.vertices.data(), mesh.vertices.size() * sizeof(Vec3));
    h = fnv1a(mesh.faces.data(), mesh.faces.size() * sizeof(Face), h);
    h = fnv1a(&resolution, sizeof resolution, h);
    return fnv1a(&band, sizeof band, h);
}

inline constexpr char kUdfCacheMagic[4] = {'S', 'P', 'C', 'U'};

inline void write_udf_cache(const SparseGrid& grid, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write cache " + tmp);
        out.write(kUdfCacheMagic, 4);
        write_le<std::int32_t>(out, grid.resolution);
        write_le<double>(out, grid.band);
        write_le<std::uint64_t>(out, grid.cubes.size());
        write_le<std::uint64_t>(out, grid.corners.size());
        for (const Vec3i& c : grid.cubes)
            for (int k = 0; k < 3; ++k) write_le<std::int32_t>(out, c[k]);
        for (const Vec3i& c : grid.corners)
            for (int k = 0; k < 3; ++k) write_le<std::int32_t>(out, c[k]);
        for (double u : grid.udf) write_le<double>(out, u);
        for (std::uint32_t t : grid.closest_tri) write_le<std::uint32_t>(out, t);
        if (!out) throw Error("failed writing cache " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::optional<SparseGrid> read_udf_cache(const std::filesystem::path& path, int resolution, double band) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto take = [&]<class T>(T& v) {
        if (pos + sizeof(T) > data.size()) return false;
        v = read_le<T>(data.data() + pos);
        pos += sizeof(T);
        return true;
    };
    if (data.size() < 4 || std::memcmp(data.data(), kUdfCacheMagic, 4) != 0) return std::nullopt;
    pos = 4;
    std::int32_t res = 0;
    double b = 0.0;
    std::uint64_t nc = 0, nv = 0;
    if (!take(res) || !take(b) || !take(nc) || !take(nv) || res != resolution || b != band) return std::nullopt;
    if (data.size() - pos != nc * 12 + nv * (12 + 8 + 4)) return std::nullopt;
    SparseGrid grid;
    grid.resolution = res;
    grid.band = b;
    grid.cubes.resize(nc);
    grid.corners.resize(nv);
    grid.udf.resize(nv);
    grid.closest_tri.resize(nv);
    std::int32_t x = 0;
    for (auto& c : grid.cubes)
        for (int k = 0; k < 3; ++k) take(x), c[k] = x;
    for (auto& c : grid.corners)
        for (int k = 0; k < 3; ++k) take(x), c[k] = x;
    for (auto& u : grid.udf) take(u);
    for (auto& t : grid.closest_tri) take(t);
    index_grid(grid);
    grid.sign.assign(nv, 0);
    grid.delta.assign(nv, Vec3::Zero());
    return grid;
}

/// Parity of hits of a ray against a face subset.
inline bool inside_by_parity(const TriMesh& mesh, const std::vector<std::uint32_t>& faces, const Vec3& p, const Vec3& dir) {
    int hits = 0;
    for (std::uint32_t f : faces) {
        const Face& t = mesh.faces[f];
        if (ray_triangle(p, dir, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]) > 0.0) ++hits;
    }
    return hits % 2 == 1;
}

} // namespace detail

/// Inside test for p against a closed face set: majority over three skewed rays.
inline bool point_inside(const TriMesh& mesh, const std::vector<std::uint32_t>& faces, const Vec3& p) {
    static const Vec3 kDirs[3] = {Vec3(0.5773, 0.5774, 0.5775).normalized(), Vec3(-0.2113, 0.7887, -0.5774).normalized(),
                                  Vec3(0.7071, -0.3162, 0.6325).normalized()};
    int votes = 0;
    for (const Vec3& d : kDirs) votes += detail::inside_by_parity(mesh, faces, p, d);
    return votes >= 2;
}

/// Drops every connected component lying inside another component.
inline TriMesh remove_enclosed_components(const TriMesh& mesh, std::size_t* removed = nullptr) {
    const auto comps = face_components(mesh);
    std::vector<std::uint8_t> drop(comps.size(), 0);
    for (std::size_t a = 0; a < comps.size(); ++a) {
        const Face& t = mesh.faces[comps[a].front()];
        const Vec3 probe = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
        for (std::size_t b = 0; b < comps.size() && !drop[a]; ++b)
            if (a != b && point_inside(mesh, comps[b], probe)) drop[a] = 1;
    }
    TriMesh out;
    out.vertices = mesh.vertices;
    std::size_t n = 0;
    for (std::size_t a = 0; a < comps.size(); ++a) {
        if (drop[a]) {
            ++n;
            continue;
        }
        for (std::uint32_t f : comps[a]) out.faces.push_back(mesh.faces[f]);
    }
    if (removed) *removed = n;
    return compact_vertices(out);
}

/// Runs a named stage, timing it and tagging any failure with the stage name.
class StageRunner {
  public:
    explicit StageRunner(StageTimings& timings) : timings_(timings) {}

    template <class Fn>
    decltype(auto) operator()(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        struct Record {
            StageTimings& timings;
            const std::string& name;
            std::chrono::steady_clock::time_point t0;
            ~Record() {
                timings.stages.emplace_back(
                    name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            }
        } record{timings_, name, t0};
        try {
            return fn();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
    }

  private:
    StageTimings& timings_;
};

inline RemeshResult remesh(const TriMesh& input, const PipelineConfig& cfg) {
    cfg.validate();
    ThreadLimit limit(cfg.threads);
    RemeshResult res;
    StageRunner stage(res.timings);

    TriMesh mesh = stage("normalize", [&] {
        if (input.empty()) throw Error("input mesh has no faces");
        check_mesh(input);
        TriMesh m = input;
        drop_degenerate_faces(m, &res.diagnostics);
        if (m.empty()) throw Error("input mesh has only degenerate faces");
        if (!cfg.normalize) return m;
        auto [normalized, xf] = normalize(m);
        res.transform = xf;
        return normalized;
    });

    const Bvh bvh = stage("bvh", [&] { return Bvh(mesh); });

    res.grid = stage("extract_active_voxels", [&] {
        std::filesystem::path cache;
        if (!cfg.cache_dir.empty()) {
            std::filesystem::create_directories(cfg.cache_dir);
            std::ostringstream name;
            name << "udf-" << std::hex << std::setw(16) << std::setfill('0')
                 << detail::udf_cache_key(mesh, cfg.resolution, cfg.band) << ".bin";
            cache = cfg.cache_dir / name.str();
            if (auto hit = detail::read_udf_cache(cache, cfg.resolution, cfg.band)) {
                res.cache_hit = true;
                return std::move(*hit);
            }
        }
        SparseGrid g = extract_active_voxels(bvh, cfg.resolution, cfg.band);
        if (!cache.empty()) detail::write_udf_cache(g, cache);
        return g;
    });

    const OccupancyMask mask = stage("flood_fill", [&] { return flood_fill(res.grid); });
    stage("assemble_sdf", [&] { assemble_sdf(res.grid); });
    res.signs = stage("refine_signs", [&] {
        return refine_signs(res.grid, bvh, mask, {cfg.eta * res.grid.h(), cfg.sheet_half_width});
    });
    res.deform = stage("optimize_deformation", [&] { return optimize_deformation(res.grid, bvh, cfg.deform); });
    if (cfg.render_refine)
        res.render = stage("render_refine", [&] {
            return refine_with_views(res.grid, mesh, default_rig(cfg.views, 2.5, 0.8, cfg.image_size), cfg.render,
                                     &res.diagnostics);
        });

    TriMesh surface = stage("marching_cubes", [&] {
        ExtractionResult ex = marching_cubes(res.grid);
        res.ambiguous_cubes = ex.ambiguous_cubes;
        return std::move(ex.mesh);
    });
    surface = stage("fill_all_holes", [&] {
        return fill_all_holes(surface, cfg.max_loop, &res.holes, &res.diagnostics);
    });
    if (cfg.fill_cavities)
        surface = stage("fill_cavities", [&] { return remove_enclosed_components(surface, &res.cavities_removed); });
    res.mesh = stage("denormalize", [&] { return cfg.normalize ? denormalize(surface, res.transform) : surface; });
    return res;
}

} // namespace sparcubes

// sparcubes command-line front end.

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <png.h>

#include <sparcubes/sparcubes.hpp>

namespace sc = sparcubes;

namespace {

std::size_t env_threads() {
    if (const char* s = std::getenv("SPARCUBE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(s, &end, 10);
        if (end != s && *end == '\0' && v >= 0) return static_cast<std::size_t>(v);
        std::cerr << "warning: ignoring SPARCUBE_THREADS=" << s << '\n';
    }
    return 0;
}

void write_png(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& pixels) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw sc::Error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw sc::Error("libpng failed writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * width * channels);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void dump_views(const std::filesystem::path& dir, const sc::TriMesh& observed_mesh, const sc::TriMesh& result,
                const std::vector<sc::Camera>& rig) {
    std::filesystem::create_directories(dir);
    for (std::size_t v = 0; v < rig.size(); ++v) {
        const auto pairs = {std::pair{"observed", &observed_mesh}, std::pair{"rendered", &result}};
        for (const auto& [tag, mesh] : pairs) {
            const sc::RenderTarget rt = sc::rasterize(*mesh, rig[v]);
            const std::string stem = "view" + std::to_string(v) + "_" + tag;
            write_png(dir / (stem + "_depth.png"), rt.width, rt.height, 1, sc::depth_to_gray(rt));
            write_png(dir / (stem + "_normal.png"), rt.width, rt.height, 3, sc::normal_to_rgb(rt));
        }
    }
}

void print_diagnostics(const sc::Diagnostics& d) {
    for (const auto& w : d.warnings) std::cerr << "warning: " << w << '\n';
}

/// Applies a `key = value` file to a parsed subcommand. Keys are flag names
/// without leading dashes; flags already given on the command line win.
void apply_config(CLI::App* sub, const std::string& path) {
    if (path.empty()) return;
    const std::vector<CLI::ConfigItem> items = CLI::ConfigTOML().from_file(path);
    for (const CLI::ConfigItem& item : items) {
        if (item.name == "++" || item.name == "--") continue;
        const std::string key = item.fullname();
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (!opt || key == "config") throw CLI::ConfigError::Extras(key);
        if (opt->count() > 0) continue;
        opt->add_result(item.inputs);
        opt->run_callback();
    }
}

sc::MeshFormat output_format(const std::string& name, const std::filesystem::path& path) {
    return name.empty() ? sc::format_from_path(path) : sc::parse_format(name);
}

struct RemeshArgs {
    std::string input, output, format, trace, cache_dir, save_grid, dump_images;
    int resolution = 512;
    double band = 2.0, eta = 1.0, deform_step = 0.3;
    int deform_iters = 100;
    bool render_refine = false;
    int views = 16, image_size = 512, render_iters = 20;
    std::size_t max_loop = sc::kDefaultMaxLoop;
    bool fill_all = false, fill_cavities = false;
    std::size_t threads = 0;
};

int run_remesh(const RemeshArgs& a) {
    sc::Diagnostics load_diag;
    const sc::TriMesh input = sc::load_mesh(a.input, &load_diag);
    print_diagnostics(load_diag);

    sc::PipelineConfig cfg;
    cfg.resolution = a.resolution;
    cfg.band = a.band;
    cfg.eta = a.eta;
    cfg.deform.iterations = a.deform_iters;
    cfg.deform.step_size = a.deform_step * 2.0 / a.resolution;
    cfg.render_refine = a.render_refine;
    cfg.views = a.views;
    cfg.image_size = a.image_size;
    cfg.render.iterations = a.render_iters;
    cfg.max_loop = a.fill_all ? sc::kUnlimitedLoop : a.max_loop;
    cfg.fill_cavities = a.fill_cavities;
    cfg.threads = a.threads;
    cfg.cache_dir = a.cache_dir;

    sc::RemeshResult res = sc::remesh(input, cfg);
    print_diagnostics(res.diagnostics);
    sc::save_mesh(res.mesh, a.output, output_format(a.format, a.output));
    if (!a.trace.empty()) res.deform.write_csv(a.trace);
    if (!a.save_grid.empty()) sc::write_spc3(res.grid, std::filesystem::path(a.save_grid));
    if (!a.dump_images.empty()) {
        const auto rig = sc::default_rig(a.views, 2.5, 0.8, a.image_size);
        const sc::TriMesh observed = sc::normalize(input).first;
        dump_views(a.dump_images, observed, sc::marching_cubes(res.grid).mesh, rig);
    }

    const sc::TopologyAudit audit = sc::watertight_audit(res.mesh);
    std::cerr << res.timings.to_text();
    std::cerr << "cubes " << res.grid.cubes.size() << ", corners " << res.grid.corners.size() << ", faces "
              << res.mesh.faces.size() << (res.cache_hit ? " (udf cache hit)" : "") << '\n';
    std::cerr << "signs: ambiguous " << res.signs.ambiguous << ", flipped " << res.signs.flipped_to_exterior
              << ", open sheet " << res.signs.open_sheet << ", undecided " << res.signs.undecided
              << ", bubbles " << res.signs.bubbles << '\n';
    std::cerr << "deform: loss " << res.deform.initial_loss << " -> " << res.deform.final_loss << " in "
              << res.deform.rows.size() - 1 << " iterations" << (res.deform.converged ? "" : " (not converged)") << '\n';
    if (res.render)
        std::cerr << "render refine: loss " << res.render->initial_loss << " -> " << res.render->final_loss << ", "
                  << res.render->visible_cubes << " visible cubes\n";
    std::cerr << "holes: " << res.holes.to_text() << '\n';
    if (cfg.fill_cavities) std::cerr << "cavities removed: " << res.cavities_removed << '\n';
    std::cerr << "watertight: " << (audit.watertight() ? "yes" : "no") << " (boundary " << audit.boundary_edges
              << ", nonmanifold " << audit.nonmanifold_edges << ", components " << audit.connected_components << ")\n";
    return 0;
}

struct MetricsArgs {
    std::string reference, test, json;
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    double tau_rel = 0.01;
    std::size_t threads = 0;
};

int run_metrics(const MetricsArgs& a) {
    sc::ThreadLimit limit(a.threads);
    sc::Diagnostics diag;
    const sc::TriMesh ref = sc::load_mesh(a.reference, &diag);
    const sc::TriMesh test = sc::load_mesh(a.test, &diag);
    print_diagnostics(diag);
    // Both meshes go into the reference's canonical frame.
    const sc::NormTransform xf = sc::normalize(ref).second;
    sc::TriMesh ref_n = ref, test_n = test;
    for (auto& v : ref_n.vertices) v = xf.apply(v);
    for (auto& v : test_n.vertices) v = xf.apply(v);
    sc::MetricsReport rep = sc::compute_metrics(ref_n, test_n, {a.samples, a.seed, a.tau_rel});
    // STL cannot carry connectivity; audit its welded form instead.
    if (sc::format_from_path(a.test) == sc::MeshFormat::Stl) rep.audit = sc::watertight_audit(sc::weld_vertices(test));
    std::cout << rep.to_text();
    if (!a.json.empty()) {
        std::ofstream out(a.json);
        if (!out) throw sc::Error("cannot write " + a.json);
        out << rep.to_json().dump(2) << '\n';
    }
    return 0;
}

int run_inspect(const std::string& path) {
    const sc::SparseGrid g = sc::read_spc3(std::filesystem::path(path));
    std::size_t negative = 0, saturated = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    const double clamp = g.max_delta() * (1.0 - 1e-6);
    for (std::size_t i = 0; i < g.corners.size(); ++i) {
        lo = std::min(lo, g.phi[i]);
        hi = std::max(hi, g.phi[i]);
        sum += g.phi[i];
        negative += std::signbit(g.phi[i]);
        saturated += g.delta[i].cwiseAbs().maxCoeff() >= clamp;
    }
    const double n = static_cast<double>(std::max<std::size_t>(g.corners.size(), 1));
    std::cout << "format: SPC3 v" << sc::kSpc3Version << "\nresolution: " << g.resolution << "\nband: " << g.band
              << "\nh: " << g.h() << "\ncubes: " << g.cubes.size() << "\ncorners: " << g.corners.size()
              << "\nphi_min: " << lo << "\nphi_max: " << hi << "\nphi_mean: " << sum / n
              << "\ninterior_fraction: " << negative / n << "\ndelta_clamp_saturation: " << saturated / n << '\n';
    return 0;
}

int run_fill_holes(const std::string& input, const std::string& output, const std::string& format,
                   std::size_t max_loop, bool fill_all) {
    sc::Diagnostics diag;
    const sc::TriMesh mesh = sc::load_mesh(input, &diag);
    sc::HoleFillReport rep;
    const sc::TriMesh out = sc::fill_all_holes(mesh, fill_all ? sc::kUnlimitedLoop : max_loop, &rep, &diag);
    print_diagnostics(diag);
    sc::save_mesh(out, output, output_format(format, output));
    std::cout << rep.to_text() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Watertight remeshing on sparse deformable marching-cubes grids"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    const std::size_t default_threads = env_threads();

    RemeshArgs ra;
    ra.threads = default_threads;
    auto* remesh = app.add_subcommand("remesh", "Convert a raw mesh into a watertight mesh");
    std::string remesh_config, metrics_config, fill_config;
    remesh->add_option("--config", remesh_config, "key = value file; flags given on the command line take precedence")
        ->check(CLI::ExistingFile);
    remesh->add_option("input", ra.input, "Input mesh (obj, stl, ply)")->required()->check(CLI::ExistingFile);
    remesh->add_option("-o,--output", ra.output, "Output mesh path")->required();
    remesh->add_option("--format", ra.format, "Output format: obj, stl, stl-ascii, ply, ply-ascii (default: from extension)")
        ->check(CLI::IsMember({"obj", "stl", "stl-ascii", "ply", "ply-ascii"}));
    remesh->add_option("--resolution", ra.resolution, "Grid resolution R")->check(CLI::Range(64, 1024));
    remesh->add_option("--band", ra.band, "Narrow band half width, multiples of h")->check(CLI::Range(1.0, 16.0));
    remesh->add_option("--eta", ra.eta, "Sign-refinement gradient step, multiples of h")->check(CLI::Range(0.0, 8.0));
    remesh->add_option("--deform-iters", ra.deform_iters, "Deformation iterations")->check(CLI::PositiveNumber);
    remesh->add_option("--deform-step", ra.deform_step, "Max corner move per deformation iteration, multiples of h")
        ->check(CLI::Range(1e-6, 0.499));
    remesh->add_flag("--render-refine", ra.render_refine, "Enable multi-view depth/normal refinement");
    remesh->add_option("--views", ra.views, "Render-refine camera count")->check(CLI::Range(1, 32));
    remesh->add_option("--image-size", ra.image_size, "Render-refine image width and height")->check(CLI::Range(8, 4096));
    remesh->add_option("--render-iters", ra.render_iters, "Render-refine iterations")->check(CLI::PositiveNumber);
    remesh->add_option("--max-loop", ra.max_loop, "Largest boundary loop the hole filler closes")->check(CLI::Range(3, 1 << 30));
    remesh->add_flag("--fill-all", ra.fill_all, "Close holes of any size");
    remesh->add_flag("--fill-cavities", ra.fill_cavities, "Drop output components enclosed by another component");
    remesh->add_option("--threads", ra.threads, "Worker threads, 0 = all (env SPARCUBE_THREADS)");
    remesh->add_option("--cache-dir", ra.cache_dir, "Directory for cached UDF grids");
    remesh->add_option("--trace", ra.trace, "Write the deformation loss trace as CSV");
    remesh->add_option("--save-grid", ra.save_grid, "Write the final grid as SPC3");
    remesh->add_option("--dump-images", ra.dump_images, "Write observed/rendered depth and normal PNGs per view");

    MetricsArgs ma;
    ma.threads = default_threads;
    auto* metrics = app.add_subcommand("metrics", "Compare a mesh against a reference (CD, ANC, F1, watertightness)");
    metrics->add_option("--config", metrics_config, "key = value file; flags given on the command line take precedence")
        ->check(CLI::ExistingFile);
    metrics->add_option("reference", ma.reference, "Reference mesh")->required()->check(CLI::ExistingFile);
    metrics->add_option("test", ma.test, "Mesh under test")->required()->check(CLI::ExistingFile);
    metrics->add_option("--samples", ma.samples, "Surface samples per mesh")->check(CLI::PositiveNumber);
    metrics->add_option("--seed", ma.seed, "Sampling seed");
    metrics->add_option("--tau-rel", ma.tau_rel, "F1 threshold as a fraction of the reference bbox diagonal")
        ->check(CLI::PositiveNumber);
    metrics->add_option("--threads", ma.threads, "Worker threads, 0 = all (env SPARCUBE_THREADS)");
    metrics->add_option("-o,--output", ma.json, "Also write the report as JSON");

    std::string grid_path;
    auto* inspect = app.add_subcommand("inspect", "Summarise an SPC3 grid file");
    inspect->add_option("grid", grid_path, "SPC3 file")->required()->check(CLI::ExistingFile);

    std::string fh_input, fh_output, fh_format;
    std::size_t fh_max_loop = sc::kDefaultMaxLoop;
    bool fh_fill_all = false;
    auto* fill = app.add_subcommand("fill-holes", "Close small boundary loops by ear clipping");
    fill->add_option("--config", fill_config, "key = value file; flags given on the command line take precedence")
        ->check(CLI::ExistingFile);
    fill->add_option("input", fh_input, "Input mesh")->required()->check(CLI::ExistingFile);
    fill->add_option("-o,--output", fh_output, "Output mesh path")->required();
    fill->add_option("--format", fh_format, "Output format: obj, stl, stl-ascii, ply, ply-ascii (default: from extension)")
        ->check(CLI::IsMember({"obj", "stl", "stl-ascii", "ply", "ply-ascii"}));
    fill->add_option("--max-loop", fh_max_loop, "Largest boundary loop to close")->check(CLI::Range(3, 1 << 30));
    fill->add_flag("--fill-all", fh_fill_all, "Close holes of any size");

    try {
        app.parse(argc, argv);
        if (*remesh) apply_config(remesh, remesh_config);
        if (*metrics) apply_config(metrics, metrics_config);
        if (*fill) apply_config(fill, fill_config);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*remesh) return run_remesh(ra);
        if (*metrics) return run_metrics(ma);
        if (*inspect) return run_inspect(grid_path);
        if (*fill) return run_fill_holes(fh_input, fh_output, fh_format, fh_max_loop, fh_fill_all);
    } catch (const sc::StageError& e) {
        std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

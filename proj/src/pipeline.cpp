#include "gmr/pipeline.hpp"

#include "gmr/error.hpp"
#include "gmr/image.hpp"
#include "gmr/mesh_io.hpp"
#include "gmr/render.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace gmr {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Vec3> fibonacci_hemisphere(int n, double radius, const Vec3 &up, std::uint64_t seed) {
    if (n < 1) {
        throw ConfigError("need at least one view");
    }
    if (!(radius > 0.0)) {
        throw ConfigError("camera radius must be positive");
    }
    const Vec3 u = up.normalized();
    if (!u.allFinite()) {
        throw ConfigError("up vector must be non-zero");
    }
    // Any orthonormal pair spanning the plane perpendicular to up.
    const Vec3 helper = std::abs(u.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = (helper - helper.dot(u) * u).normalized();
    const Vec3 e2 = u.cross(e1);

    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    // Fraction of a turn derived from the seed through a fixed integer hash.
    std::uint64_t h = seed * 0x9e3779b97f4a7c15ull;
    h ^= h >> 31;
    const double offset = seed == 0 ? 0.0 : 2.0 * std::numbers::pi * static_cast<double>(h >> 11) * 0x1p-53;

    std::vector<Vec3> points(n);
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - static_cast<double>(i) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden * i + offset;
        const Vec3 dir = r * std::cos(phi) * e1 + r * std::sin(phi) * e2 + z * u;
        points[i] = radius * dir.normalized();
    }
    return points;
}

std::vector<Camera> make_view_cameras(const MakeViewsOptions &options) {
    if (options.resolution < 1) {
        throw ConfigError("resolution must be >= 1");
    }
    const auto eyes = fibonacci_hemisphere(options.n_views, options.radius, options.up, options.seed);
    std::vector<Camera> cams;
    cams.reserve(eyes.size());
    for (const Vec3 &eye : eyes) {
        cams.push_back(look_at(eye, Vec3::Zero(), options.up, options.resolution, options.resolution,
                               options.fov_degrees));
    }
    return cams;
}

namespace {

std::string view_name(const char *prefix, std::size_t i) {
    std::ostringstream os;
    os << prefix << "_" << std::setw(4) << std::setfill('0') << i << ".png";
    return os.str();
}

json vec_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

} // namespace

CameraSet make_views(const TriangleMesh &input, const MakeViewsOptions &options, const fs::path &out_dir) {
    auto [mesh, transform] = normalize_mesh(input);
    const auto cams = make_view_cameras(options);
    fs::create_directories(out_dir);

    RenderOptions ropts;
    ropts.background = options.background;

    CameraSet set;
    set.views.resize(cams.size());
    std::exception_ptr failure;
    const long n = static_cast<long>(cams.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        try {
            const RenderOutput out = render_mesh(mesh, cams[i], ropts);
            CameraRecord &rec = set.views[i];
            rec.camera = cams[i];
            rec.rgb = view_name("rgb", i);
            rec.mask = view_name("mask", i);
            write_png(out.rgb, out_dir / rec.rgb);
            write_png(out.alpha, out_dir / rec.mask);
        } catch (...) {
#pragma omp critical(gmr_make_views_failure)
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    json meta;
    meta["generator"] = std::string("gmr ") + kVersion;
    meta["n_views"] = options.n_views;
    meta["resolution"] = options.resolution;
    meta["radius"] = options.radius;
    meta["up"] = vec_json(options.up);
    meta["seed"] = options.seed;
    meta["fov_degrees"] = options.fov_degrees;
    meta["background"] = vec_json(options.background);
    meta["normalization"] = {{"center", vec_json(transform.center)}, {"scale", transform.scale}};
    meta["gt_mesh"] = "gt_mesh.ply";
    set.metadata_json = meta.dump();

    write_camera_set(set, out_dir / "cameras.json");
    save_mesh(mesh, out_dir / "gt_mesh.ply");
    return set;
}

CameraSet make_views(const fs::path &mesh_path, const MakeViewsOptions &options, const fs::path &out_dir) {
    return make_views(load_mesh(mesh_path), options, out_dir);
}

bool is_held_out(std::size_t view_index) { return view_index % 11 == 10; }

std::vector<std::size_t> select_views(std::size_t count, ViewSubset subset) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) {
        const bool held = is_held_out(i);
        if (subset == ViewSubset::All || (subset == ViewSubset::HeldOut) == held) {
            out.push_back(i);
        }
    }
    if (out.empty()) {
        for (std::size_t i = 0; i < count; ++i) {
            out.push_back(i);
        }
    }
    return out;
}

Vec3 dataset_background(const CameraSet &set) {
    const json meta = json::parse(set.metadata_json);
    if (meta.contains("background")) {
        const auto &b = meta["background"];
        return Vec3(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>());
    }
    return Vec3::Zero();
}

std::vector<View> load_views(const fs::path &dataset_dir, ViewSubset subset) {
    const CameraSet set = read_camera_set(dataset_dir / "cameras.json");
    if (set.views.empty()) {
        throw ConfigError("dataset " + dataset_dir.string() + " has no views");
    }
    const auto picked = select_views(set.views.size(), subset);
    std::vector<View> views;
    views.reserve(picked.size());
    for (std::size_t i : picked) {
        const CameraRecord &rec = set.views[i];
        const std::string label = "view " + std::to_string(i);
        if (rec.rgb.empty() || !fs::exists(dataset_dir / rec.rgb)) {
            throw IoError(label + ": missing RGB image '" + rec.rgb + "'");
        }
        if (rec.mask.empty() || !fs::exists(dataset_dir / rec.mask)) {
            throw IoError(label + ": missing mask image '" + rec.mask + "'");
        }
        View v;
        v.camera = rec.camera;
        v.target.rgb = read_png(dataset_dir / rec.rgb);
        Image mask = read_png(dataset_dir / rec.mask);
        if (mask.channels() == 3) {
            Image gray(mask.width(), mask.height(), 1);
            for (std::size_t p = 0; p < gray.size(); ++p) {
                gray.data()[p] = mask.data()[3 * p];
            }
            mask = std::move(gray);
        }
        v.target.mask = std::move(mask);
        if (v.target.rgb.channels() != 3 || v.target.rgb.width() != rec.camera.width ||
            v.target.rgb.height() != rec.camera.height || v.target.mask.width() != rec.camera.width ||
            v.target.mask.height() != rec.camera.height) {
            throw ShapeError(label + ": image size does not match the camera");
        }
        views.push_back(std::move(v));
    }
    return views;
}

// ---- run configuration ----

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string &key, const std::string &v) {
    double out = 0.0;
    const auto *end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
}

long long parse_int(const std::string &key, const std::string &v) {
    long long out = 0;
    const auto *end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

Vec3 parse_vec3(const std::string &key, const std::string &v) {
    Vec3 out;
    std::stringstream ss(v);
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ',')) {
        if (i == 3) {
            i = 4;
            break;
        }
        out[i++] = parse_double(key, trim(part));
    }
    if (i != 3) {
        throw ConfigError("key '" + key + "': expected three comma-separated numbers, got '" + v + "'");
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string fmt(const Vec3 &v) { return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z()); }

using Setter = std::function<void(RunConfig &, const std::string &, const std::string &)>;
using Getter = std::function<std::string(const RunConfig &)>;

struct KeySpec {
    Setter set;
    Getter get;
};

const std::vector<std::pair<std::string, KeySpec>> &key_table() {
    static const std::vector<std::pair<std::string, KeySpec>> table = {
        {"dataset", {[](RunConfig &c, auto &, auto &v) { c.dataset = v; },
                     [](const RunConfig &c) { return c.dataset.string(); }}},
        {"out_dir", {[](RunConfig &c, auto &, auto &v) { c.out_dir = v; },
                     [](const RunConfig &c) { return c.out_dir.string(); }}},
        {"init", {[](RunConfig &c, auto &, auto &v) { c.init = v; }, [](const RunConfig &c) { return c.init; }}},
        {"init_facets",
         {[](RunConfig &c, auto &k, auto &v) {
              const auto n = parse_int(k, v);
              if (n < 20) {
                  throw ConfigError("key '" + k + "': must be >= 20");
              }
              c.init_facets = static_cast<int>(n);
          },
          [](const RunConfig &c) { return std::to_string(c.init_facets); }}},
        {"init_radius", {[](RunConfig &c, auto &k, auto &v) { c.init_radius = parse_double(k, v); },
                         [](const RunConfig &c) { return fmt(c.init_radius); }}},
        {"init_offset", {[](RunConfig &c, auto &k, auto &v) { c.init_offset = parse_vec3(k, v); },
                         [](const RunConfig &c) { return fmt(c.init_offset); }}},
        {"reference", {[](RunConfig &c, auto &, auto &v) { c.reference = v; },
                       [](const RunConfig &c) { return c.reference.string(); }}},
        {"holdout", {[](RunConfig &c, auto &k, auto &v) { c.holdout = parse_bool(k, v); },
                     [](const RunConfig &c) { return std::string(c.holdout ? "true" : "false"); }}},
        {"deterministic", {[](RunConfig &c, auto &k, auto &v) { c.deterministic = parse_bool(k, v); },
                           [](const RunConfig &c) { return std::string(c.deterministic ? "true" : "false"); }}},
        {"iterations", {[](RunConfig &c, auto &k, auto &v) { c.fit.iterations = static_cast<int>(parse_int(k, v)); },
                        [](const RunConfig &c) { return std::to_string(c.fit.iterations); }}},
        {"batch_size", {[](RunConfig &c, auto &k, auto &v) { c.fit.batch_size = static_cast<int>(parse_int(k, v)); },
                        [](const RunConfig &c) { return std::to_string(c.fit.batch_size); }}},
        {"lr", {[](RunConfig &c, auto &k, auto &v) { c.fit.position.lr = parse_double(k, v); },
                [](const RunConfig &c) { return fmt(c.fit.position.lr); }}},
        {"lr_color", {[](RunConfig &c, auto &k, auto &v) { c.fit.color_lr = parse_double(k, v); },
                      [](const RunConfig &c) { return fmt(c.fit.color_lr); }}},
        {"beta1", {[](RunConfig &c, auto &k, auto &v) { c.fit.position.beta1 = parse_double(k, v); },
                   [](const RunConfig &c) { return fmt(c.fit.position.beta1); }}},
        {"beta2", {[](RunConfig &c, auto &k, auto &v) { c.fit.position.beta2 = parse_double(k, v); },
                   [](const RunConfig &c) { return fmt(c.fit.position.beta2); }}},
        {"eps", {[](RunConfig &c, auto &k, auto &v) { c.fit.position.eps = parse_double(k, v); },
                 [](const RunConfig &c) { return fmt(c.fit.position.eps); }}},
        {"final_lr_factor", {[](RunConfig &c, auto &k, auto &v) { c.fit.final_lr_factor = parse_double(k, v); },
                             [](const RunConfig &c) { return fmt(c.fit.final_lr_factor); }}},
        {"optimize_colors", {[](RunConfig &c, auto &k, auto &v) { c.fit.optimize_colors = parse_bool(k, v); },
                             [](const RunConfig &c) { return std::string(c.fit.optimize_colors ? "true" : "false"); }}},
        {"w_color", {[](RunConfig &c, auto &k, auto &v) { c.fit.weights.color = parse_double(k, v); },
                     [](const RunConfig &c) { return fmt(c.fit.weights.color); }}},
        {"w_silhouette", {[](RunConfig &c, auto &k, auto &v) { c.fit.weights.silhouette = parse_double(k, v); },
                          [](const RunConfig &c) { return fmt(c.fit.weights.silhouette); }}},
        {"w_edge", {[](RunConfig &c, auto &k, auto &v) { c.fit.weights.edge = parse_double(k, v); },
                    [](const RunConfig &c) { return fmt(c.fit.weights.edge); }}},
        {"w_laplacian", {[](RunConfig &c, auto &k, auto &v) { c.fit.weights.laplacian = parse_double(k, v); },
                         [](const RunConfig &c) { return fmt(c.fit.weights.laplacian); }}},
        {"cov_path",
         {[](RunConfig &c, auto &k, auto &v) {
              if (v == "embed") {
                  c.fit.render.convert.path = CovariancePath::Embed;
              } else if (v == "eigen") {
                  c.fit.render.convert.path = CovariancePath::Eigen;
              } else {
                  throw ConfigError("key '" + k + "': expected embed or eigen, got '" + v + "'");
              }
          },
          [](const RunConfig &c) {
              return std::string(c.fit.render.convert.path == CovariancePath::Embed ? "embed" : "eigen");
          }}},
        {"rescale", {[](RunConfig &c, auto &k, auto &v) { c.fit.render.convert.rescale = parse_bool(k, v); },
                     [](const RunConfig &c) { return std::string(c.fit.render.convert.rescale ? "true" : "false"); }}},
        {"background",
         {[](RunConfig &c, auto &k, auto &v) {
              if (v == "auto") {
                  c.background.reset();
              } else {
                  c.background = parse_vec3(k, v);
              }
          },
          [](const RunConfig &c) { return c.background ? fmt(*c.background) : std::string("auto"); }}},
        {"seed",
         {[](RunConfig &c, auto &k, auto &v) {
              const auto s = parse_int(k, v);
              if (s < 0) {
                  throw ConfigError("key '" + k + "': must be >= 0");
              }
              c.fit.seed = static_cast<std::uint64_t>(s);
          },
          [](const RunConfig &c) { return std::to_string(c.fit.seed); }}},
        {"checkpoint_every",
         {[](RunConfig &c, auto &k, auto &v) { c.fit.checkpoint_every = static_cast<int>(parse_int(k, v)); },
          [](const RunConfig &c) { return std::to_string(c.fit.checkpoint_every); }}},
        {"cd_every", {[](RunConfig &c, auto &k, auto &v) { c.fit.cd_every = static_cast<int>(parse_int(k, v)); },
                      [](const RunConfig &c) { return std::to_string(c.fit.cd_every); }}},
        {"cd_samples",
         {[](RunConfig &c, auto &k, auto &v) {
              const auto n = parse_int(k, v);
              if (n < 1) {
                  throw ConfigError("key '" + k + "': must be >= 1");
              }
              c.fit.cd_samples = static_cast<std::size_t>(n);
          },
          [](const RunConfig &c) { return std::to_string(c.fit.cd_samples); }}},
    };
    return table;
}

} // namespace

void RunConfig::set(const std::string &key, const std::string &value) {
    for (const auto &[name, spec] : key_table()) {
        if (name == key) {
            spec.set(*this, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto &[name, spec] : key_table()) {
        out += name + " = " + spec.get(*this) + "\n";
    }
    return out;
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto &entry : key_table()) {
        out.push_back(entry.first);
    }
    return out;
}

RunConfig parse_run_config(const std::string &text, const std::string &source) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            config.set(key, value);
        } catch (const ConfigError &e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return config;
}

RunConfig load_run_config(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path.string());
}

TriangleMesh initial_mesh(const RunConfig &config) {
    TriangleMesh mesh = config.init == "sphere"
                            ? make_icosphere(static_cast<std::size_t>(config.init_facets), config.init_radius)
                            : load_mesh(config.init);
    return shift_initialization(mesh, config.init_offset);
}

namespace {

void write_manifest(const RunConfig &config, const std::string &status, const std::string &error,
                    std::size_t train_views, const std::vector<HistoryRow> &history) {
    json m;
    m["generator"] = std::string("gmr ") + kVersion;
    m["status"] = status;
    if (!error.empty()) {
        m["error"] = error;
    }
    m["seed"] = config.fit.seed;
    m["deterministic"] = config.deterministic;
    m["config"] = config.to_text();
    m["train_views"] = train_views;
    m["iterations_completed"] = history.size();
    if (!history.empty()) {
        m["final_loss"] = history.back().loss.total;
    }
    std::ofstream out(config.out_dir / "manifest.json");
    out << m.dump(2) << "\n";
    if (!out) {
        throw IoError("failed writing manifest in " + config.out_dir.string());
    }
}

} // namespace

FitSummary fit_command(const RunConfig &config) {
    if (config.dataset.empty()) {
        throw ConfigError("config key 'dataset' is required");
    }
    if (config.fit.render.convert.path != CovariancePath::Embed) {
        throw ConfigError("fitting needs cov_path = embed (the backward pass differentiates that path)");
    }
    const auto views = load_views(config.dataset, config.holdout ? ViewSubset::Train : ViewSubset::All);
    const TriangleMesh init = initial_mesh(config);

    TriangleMesh reference;
    const TriangleMesh *ref_ptr = nullptr;
    fs::path ref_path = config.reference;
    if (ref_path.empty() && fs::exists(config.dataset / "gt_mesh.ply")) {
        ref_path = config.dataset / "gt_mesh.ply";
    }
    if (!ref_path.empty() && config.fit.cd_every > 0) {
        reference = load_mesh(ref_path);
        ref_ptr = &reference;
    }

    fs::create_directories(config.out_dir);
    FitConfig fc = config.fit;
    fc.render.background = config.background ? *config.background
                                             : dataset_background(read_camera_set(config.dataset / "cameras.json"));
    fc.config_snapshot = config.to_text();
    if (fc.checkpoint_every > 0) {
        fc.checkpoint_dir = config.out_dir / "checkpoints";
    }

    std::vector<HistoryRow> progress;
    TriangleMesh last = init;
    auto track = [&](const HistoryRow &row, const TriangleMesh &mesh) {
        progress.push_back(row);
        last = mesh;
        return true;
    };
    {
        std::ofstream cfg(config.out_dir / "config.txt");
        cfg << fc.config_snapshot;
    }
    FitSummary summary;
    try {
        FitResult result = fit(init, views, fc, ref_ptr, track);
        summary.mesh = std::move(result.mesh);
        summary.history = std::move(result.history);
    } catch (const std::exception &e) {
        if (!progress.empty()) {
            save_mesh(last, config.out_dir / "partial_final_mesh.ply");
            write_history_csv(progress, config.out_dir / "partial_history.csv");
        }
        write_manifest(config, "failed", e.what(), views.size(), progress);
        throw;
    }
    save_mesh(summary.mesh, config.out_dir / "final_mesh.ply");
    write_history_csv(summary.history, config.out_dir / "history.csv");
    write_manifest(config, "ok", "", views.size(), summary.history);
    return summary;
}

MetricReport eval_command(const TriangleMesh &pred, const TriangleMesh &gt, const fs::path &dataset_dir,
                          const EvalOptions &options) {
    const CameraSet set = read_camera_set(dataset_dir / "cameras.json");
    const auto views = load_views(dataset_dir, options.views);
    const auto picked = select_views(set.views.size(), options.views);

    MetricReport report;
    report.cd = chamfer_distance(pred, gt, options.samples, options.seed);
    report.nc = normal_consistency(pred, gt, options.samples, options.seed);

    RenderOptions ropts;
    ropts.background = dataset_background(set);
    report.views.resize(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        const RenderOutput out = render_mesh(pred, views[i].camera, ropts);
        report.views[i].name = set.views[picked[i]].rgb;
        report.views[i].psnr = psnr(out.rgb, views[i].target.rgb);
        report.views[i].ssim = ssim(out.rgb, views[i].target.rgb);
    }
    return report;
}

std::size_t export_command(const fs::path &mesh_path, const fs::path &out_ply, const ConvertOptions &options) {
    const TriangleMesh mesh = load_mesh(mesh_path);
    const auto gaussians = convert_mesh(mesh, options);
    export_gaussians(gaussians, out_ply);
    return gaussians.size();
}

} // namespace gmr

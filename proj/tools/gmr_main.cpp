// gmr: command-line front end (make-views, fit, eval, export).

#include "gmr/error.hpp"
#include "gmr/mesh_io.hpp"
#include "gmr/pipeline.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

namespace {

gmr::Vec3 parse_vec3_flag(const std::string &text) {
    std::stringstream ss(text);
    gmr::Vec3 v;
    char c1 = 0, c2 = 0;
    if (!(ss >> v.x() >> c1 >> v.y() >> c2 >> v.z()) || c1 != ',' || c2 != ',') {
        throw gmr::ConfigError("expected x,y,z but got '" + text + "'");
    }
    return v;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Mesh to Gaussian splatting renderer and fitting tools"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(gmr::kVersion));

    // make-views
    auto *mv = app.add_subcommand("make-views", "Render a ground-truth view dataset of a mesh");
    std::string mv_mesh, mv_out, mv_up = "0,0,1", mv_bg = "0,0,0";
    gmr::MakeViewsOptions mv_opts;
    mv->add_option("mesh", mv_mesh, "Input mesh (.obj or .ply)")->required();
    mv->add_option("-o,--out", mv_out, "Output directory")->required();
    mv->add_option("-n,--views", mv_opts.n_views, "Number of views")->capture_default_str();
    mv->add_option("-r,--resolution", mv_opts.resolution, "Image width and height")->capture_default_str();
    mv->add_option("--radius", mv_opts.radius, "Camera distance from the origin")->capture_default_str();
    mv->add_option("--up", mv_up, "Hemisphere up direction x,y,z")->capture_default_str();
    mv->add_option("--seed", mv_opts.seed, "Azimuth offset seed")->capture_default_str();
    mv->add_option("--fov", mv_opts.fov_degrees, "Vertical field of view in degrees")->capture_default_str();
    mv->add_option("--background", mv_bg, "Background color r,g,b")->capture_default_str();

    // fit
    auto *ft = app.add_subcommand("fit", "Fit a mesh to a view dataset");
    std::string ft_config;
    std::vector<std::string> ft_sets;
    std::map<std::string, std::string> ft_flags;
    ft->add_option("config", ft_config, "Run config file (key = value lines)");
    ft->add_option("--set", ft_sets, "Override a config key: --set key=value (repeatable)");
    for (const auto &key : gmr::RunConfig::keys()) {
        ft->add_option("--" + key, ft_flags[key], "Config key '" + key + "'");
    }

    // eval
    auto *ev = app.add_subcommand("eval", "Evaluate a predicted mesh against ground truth");
    std::string ev_pred, ev_gt, ev_dataset, ev_csv;
    gmr::EvalOptions ev_opts;
    bool ev_all = false;
    ev->add_option("pred", ev_pred, "Predicted mesh")->required();
    ev->add_option("gt", ev_gt, "Ground-truth mesh")->required();
    ev->add_option("dataset", ev_dataset, "Dataset directory from make-views")->required();
    ev->add_option("--csv", ev_csv, "Write per-view metrics CSV here");
    ev->add_option("--samples", ev_opts.samples, "Surface samples per mesh")->capture_default_str();
    ev->add_option("--seed", ev_opts.seed, "Sampling seed")->capture_default_str();
    ev->add_flag("--all-views", ev_all, "Use every view instead of the held-out ones");

    // export
    auto *ex = app.add_subcommand("export", "Convert a mesh to a Gaussian splat PLY");
    std::string ex_mesh, ex_out, ex_path = "embed";
    bool ex_no_rescale = false;
    ex->add_option("mesh", ex_mesh, "Input mesh")->required();
    ex->add_option("out", ex_out, "Output PLY")->required();
    ex->add_option("--cov-path", ex_path, "Covariance construction: embed or eigen")
        ->check(CLI::IsMember({"embed", "eigen"}))
        ->capture_default_str();
    ex->add_flag("--no-rescale", ex_no_rescale, "Skip the area-matching rescale");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*mv) {
            mv_opts.up = parse_vec3_flag(mv_up);
            mv_opts.background = parse_vec3_flag(mv_bg);
            const auto set = gmr::make_views(mv_mesh, mv_opts, mv_out);
            std::cout << "wrote " << set.views.size() << " views to " << mv_out << "\n";
        } else if (*ft) {
            gmr::RunConfig config = ft_config.empty() ? gmr::RunConfig{} : gmr::load_run_config(ft_config);
            for (const auto &[key, value] : ft_flags) {
                if (ft->count("--" + key) > 0) {
                    config.set(key, value);
                }
            }
            for (const auto &kv : ft_sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) {
                    throw gmr::ConfigError("--set expects key=value, got '" + kv + "'");
                }
                config.set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            const auto summary = gmr::fit_command(config);
            const auto &last = summary.history.empty() ? gmr::HistoryRow{} : summary.history.back();
            std::cout << "fit finished: " << summary.history.size() << " iterations, final loss "
                      << last.loss.total << "; outputs in " << config.out_dir.string() << "\n";
        } else if (*ev) {
            if (ev_all) {
                ev_opts.views = gmr::ViewSubset::All;
            }
            const auto pred = gmr::load_mesh(ev_pred);
            const auto gt = gmr::load_mesh(ev_gt);
            const auto report = gmr::eval_command(pred, gt, ev_dataset, ev_opts);
            std::cout << report.summary();
            if (!ev_csv.empty()) {
                gmr::write_metric_csv(report, ev_csv);
            }
        } else if (*ex) {
            gmr::ConvertOptions opts;
            opts.path = ex_path == "eigen" ? gmr::CovariancePath::Eigen : gmr::CovariancePath::Embed;
            opts.rescale = !ex_no_rescale;
            const auto n = gmr::export_command(ex_mesh, ex_out, opts);
            std::cout << "wrote " << n << " Gaussians to " << ex_out << "\n";
        }
    } catch (const gmr::ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#pragma once

#include "gmr/camera.hpp"
#include "gmr/convert.hpp"
#include "gmr/mesh.hpp"
#include "gmr/metrics.hpp"
#include "gmr/optimize.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gmr {

constexpr const char *kVersion = "0.1.0";

/// Default vertical field of view of generated cameras.
constexpr double kDefaultFovDegrees = 50.0;

/// Fibonacci spiral over the hemisphere around `up`: point i has height
/// 1 - i/n along `up`, so point 0 sits on the pole. `seed` rotates the
/// spiral about `up` (seed 0 = no rotation).
std::vector<Vec3> fibonacci_hemisphere(int n, double radius, const Vec3 &up, std::uint64_t seed);

struct MakeViewsOptions {
    int n_views = 253;
    int resolution = 256;
    double radius = 3.0;
    Vec3 up = Vec3::UnitZ();
    std::uint64_t seed = 0;
    double fov_degrees = kDefaultFovDegrees;
    Vec3 background = Vec3::Zero();
};

/// Cameras on the hemisphere, all looking at the origin.
std::vector<Camera> make_view_cameras(const MakeViewsOptions &options);

/// Normalizes the mesh, renders every view and writes rgb_NNNN.png,
/// mask_NNNN.png, cameras.json and gt_mesh.ply into `out_dir`.
CameraSet make_views(const TriangleMesh &mesh, const MakeViewsOptions &options, const std::filesystem::path &out_dir);
CameraSet make_views(const std::filesystem::path &mesh_path, const MakeViewsOptions &options,
                     const std::filesystem::path &out_dir);

/// Every 11th view (index % 11 == 10) is held out from fitting.
bool is_held_out(std::size_t view_index);

enum class ViewSubset { All, Train, HeldOut };

/// Indices of the views in `subset`. If the subset would be empty (too few
/// views) all indices are returned.
std::vector<std::size_t> select_views(std::size_t count, ViewSubset subset);

/// Loads the camera file and the PNGs of the selected views. Throws IoError
/// naming the view when an image is missing.
std::vector<View> load_views(const std::filesystem::path &dataset_dir, ViewSubset subset);

/// Background color stored in the dataset metadata (black when absent).
Vec3 dataset_background(const CameraSet &set);

/// Everything a fit run needs; read from a flat "key = value" file.
struct RunConfig {
    std::filesystem::path dataset;
    std::filesystem::path out_dir = "run";
    /// "sphere" or a mesh path.
    std::string init = "sphere";
    int init_facets = 1280;
    double init_radius = 1.0;
    Vec3 init_offset = Vec3::Zero();
    /// Mesh for periodic chamfer logging; defaults to <dataset>/gt_mesh.ply.
    std::filesystem::path reference;
    bool holdout = true;
    bool deterministic = true;
    /// Render background; empty means the dataset's own ("auto").
    std::optional<Vec3> background;
    FitConfig fit;

    /// Applies one key; throws ConfigError naming an unknown key or a bad value.
    void set(const std::string &key, const std::string &value);
    std::string to_text() const;
    static std::vector<std::string> keys();
};

/// Parses "key = value" lines; '#' starts a comment. Missing keys keep
/// their defaults. Throws ConfigError naming the offending key or line.
RunConfig parse_run_config(const std::string &text, const std::string &source = "<config>");
RunConfig load_run_config(const std::filesystem::path &path);

/// Builds the initial mesh described by the config.
TriangleMesh initial_mesh(const RunConfig &config);

struct FitSummary {
    TriangleMesh mesh;
    std::vector<HistoryRow> history;
};

/// Runs the fit and writes final_mesh.ply, history.csv, checkpoints/ and
/// manifest.json to out_dir. On failure the manifest records the error and
/// whatever was finished is written with a "partial_" prefix before the
/// exception propagates.
FitSummary fit_command(const RunConfig &config);

struct EvalOptions {
    std::size_t samples = kDefaultMetricSamples;
    std::uint64_t seed = 0;
    ViewSubset views = ViewSubset::HeldOut;
};

/// Renders `pred` on the dataset's views and computes all metrics.
MetricReport eval_command(const TriangleMesh &pred, const TriangleMesh &gt, const std::filesystem::path &dataset_dir,
                          const EvalOptions &options = {});

/// Converts a mesh and writes the Gaussian PLY. Returns the record count.
std::size_t export_command(const std::filesystem::path &mesh_path, const std::filesystem::path &out_ply,
                           const ConvertOptions &options = {});

} // namespace gmr

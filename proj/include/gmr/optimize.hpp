#pragma once

#include "gmr/camera.hpp"
#include "gmr/mesh.hpp"
#include "gmr/objective.hpp"
#include "gmr/render.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gmr {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// VectorAdam state: one 3-vector first moment and one scalar second
/// moment (running mean of |g|^2) per vertex. Sharing the denominator across
/// the three components makes the step commute with global rotations.
class VectorAdam {
public:
    VectorAdam() = default;
    VectorAdam(std::size_t count, AdamHyper hyper);

    /// Returns the per-vertex displacement for learning rate `lr` (the
    /// hyper-parameter lr is used when `lr` is empty). Throws NonFiniteError
    /// and leaves the state untouched when any gradient is NaN/Inf.
    std::vector<Vec3> step(std::span<const Vec3> grads, std::optional<double> lr = std::nullopt);

    std::uint64_t steps() const { return step_; }
    const std::vector<Vec3> &first_moment() const { return m_; }
    const std::vector<double> &second_moment() const { return v_; }
    const AdamHyper &hyper() const { return hyper_; }

    /// Restores a saved state; throws ShapeError if sizes disagree.
    void restore(std::uint64_t steps, std::vector<Vec3> m, std::vector<double> v);

private:
    AdamHyper hyper_;
    std::uint64_t step_ = 0;
    std::vector<Vec3> m_;
    std::vector<double> v_;
};

/// Per-component Adam over 3-vectors, used for vertex colors.
class ScalarAdam {
public:
    ScalarAdam() = default;
    ScalarAdam(std::size_t count, AdamHyper hyper);

    std::vector<Vec3> step(std::span<const Vec3> grads, std::optional<double> lr = std::nullopt);

    std::uint64_t steps() const { return step_; }
    const std::vector<Vec3> &first_moment() const { return m_; }
    const std::vector<Vec3> &second_moment() const { return v_; }
    const AdamHyper &hyper() const { return hyper_; }
    void restore(std::uint64_t steps, std::vector<Vec3> m, std::vector<Vec3> v);

private:
    AdamHyper hyper_;
    std::uint64_t step_ = 0;
    std::vector<Vec3> m_;
    std::vector<Vec3> v_;
};

/// One view of a fitting dataset.
struct View {
    Camera camera;
    ViewTarget target;
};

struct FitConfig {
    int iterations = 5000;
    int batch_size = 1;
    AdamHyper position{1e-3, 0.9, 0.999, 1e-8};
    double color_lr = 1e-2;
    /// Cosine decay from lr down to lr * final_lr_factor at the last iteration.
    double final_lr_factor = 0.1;
    bool optimize_colors = true;
    LossWeights weights;
    RenderOptions render;
    std::uint64_t seed = 0;
    /// Write a checkpoint every this many iterations (0 = never).
    int checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;
    /// Text written next to each checkpoint as the config snapshot.
    std::string config_snapshot;
    /// Chamfer distance against `reference` every this many iterations (0 = never).
    int cd_every = 0;
    std::size_t cd_samples = 20000;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// Learning-rate multiplier at iteration `it` of `total`.
double cosine_lr_factor(int it, int total, double final_factor);

struct HistoryRow {
    int iteration = 0;
    LossReport loss;
    double lr = 0.0;
    double wall_seconds = 0.0;
    /// NaN when not evaluated at this iteration.
    double chamfer = 0.0;
};

struct FitResult {
    TriangleMesh mesh;
    std::vector<HistoryRow> history;
};

/// Called after each iteration; return false to stop early.
using FitCallback = std::function<bool(const HistoryRow &, const TriangleMesh &)>;

/// Fits vertex positions (VectorAdam) and, optionally, vertex colors
/// (per-component Adam) to the views. Views are drawn batch_size at a time
/// from a seeded permutation that is reshuffled once exhausted. Failures
/// are rethrown as Error with the iteration index in the message.
FitResult fit(const TriangleMesh &initial, std::span<const View> views, const FitConfig &config,
              const TriangleMesh *reference = nullptr, const FitCallback &callback = {});

/// Cycles through a seeded permutation of [0, n).
class ViewSampler {
public:
    ViewSampler(std::size_t n, std::uint64_t seed);
    std::vector<std::size_t> next(std::size_t batch);

private:
    void reshuffle();

    std::size_t n_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
};

TriangleMesh shift_initialization(const TriangleMesh &mesh, const Vec3 &offset);

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path &path);

/// Binary sidecar: magic, step counters, and both optimizers' moments as
/// little-endian doubles.
void save_optimizer_state(const VectorAdam &positions, const ScalarAdam &colors,
                          const std::filesystem::path &path);
void load_optimizer_state(VectorAdam &positions, ScalarAdam &colors, const std::filesystem::path &path);

} // namespace gmr

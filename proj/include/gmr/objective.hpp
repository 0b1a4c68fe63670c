#pragma once

#include "gmr/camera.hpp"
#include "gmr/image.hpp"
#include "gmr/mesh.hpp"
#include "gmr/render.hpp"

#include <span>
#include <string>
#include <vector>

namespace gmr {

struct LossWeights {
    double color = 1.0;
    double silhouette = 1.0;
    double edge = 0.1;
    double laplacian = 0.1;

    /// Throws ConfigError unless every weight is finite and non-negative.
    void validate() const;
};

struct ImageLoss {
    double value = 0.0;
    Image grad;
};

/// Mean squared error over all pixels and channels.
ImageLoss color_loss(const Image &rendered, const Image &target);

constexpr double kBceClamp = 1e-6;

/// Mean binary cross-entropy with alpha clamped to [1e-6, 1 - 1e-6]; the
/// gradient is zero where the clamp is active.
ImageLoss silhouette_loss(const Image &alpha, const Image &mask);

struct VertexLoss {
    double value = 0.0;
    std::vector<Vec3> grad;
};

/// Mean over edges of (|e| - mean_edge_length)^2. The mean is held fixed
/// when differentiating; since deviations from the mean sum to zero this is
/// also the exact gradient.
VertexLoss edge_length_loss(const TriangleMesh &mesh, const Topology &topology);

/// Mean over vertices of |v - mean(neighbors(v))|^2; isolated vertices add 0.
VertexLoss laplacian_loss(const TriangleMesh &mesh, const Topology &topology);

/// Ground truth for one view.
struct ViewTarget {
    Image rgb;
    Image mask;
};

struct LossReport {
    double color = 0.0;
    double silhouette = 0.0;
    double edge = 0.0;
    double laplacian = 0.0;
    double total = 0.0;
    std::vector<double> view_color;
    std::vector<double> view_silhouette;
};

struct LossResult {
    LossReport report;
    std::vector<Vec3> grad_vertices;
    std::vector<Vec3> grad_colors;
};

/// Weighted loss over a batch of views: image terms averaged over the
/// batch, regularizers once. Per-view work may run in parallel; gradients
/// are summed in view order. A zero weight skips that term entirely.
LossResult total_loss(const TriangleMesh &mesh, const Topology &topology, std::span<const Camera> cameras,
                      std::span<const ViewTarget *const> targets, const LossWeights &weights,
                      const RenderOptions &render_options);

} // namespace gmr

#pragma once

#include "gmr/camera.hpp"
#include "gmr/convert.hpp"
#include "gmr/image.hpp"
#include "gmr/mesh.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gmr {

// Rasterizer constants, following the reference splatting rasterizer.
constexpr int kTileSize = 16;
constexpr double kSigmaExtent = 3.0;
constexpr double kAlphaMax = 0.99;
constexpr double kAlphaMin = 1.0 / 255.0;
constexpr double kTransmittanceStop = 1e-4;
constexpr double kLowPassDilation = 0.3;

/// A Gaussian projected to the image plane. Pixel (x, y) samples the
/// point (x + 0.5, y + 0.5).
struct Splat2D {
    Vec2 mean = Vec2::Zero();
    /// Screen-space covariance in pixel^2, dilation included.
    Mat2 cov = Mat2::Identity();
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    double opacity = 1.0;
    int source = -1;
};

/// Integer pixel rectangle [x0, x1) x [y0, y1) covered by the 3-sigma box,
/// clipped to the image. Empty when x0 >= x1 or y0 >= y1.
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    bool empty() const { return x0 >= x1 || y0 >= y1; }
};

PixelRect splat_pixel_rect(const Vec2 &mean, const Mat2 &cov, int width, int height);

/// EWA projection: cov2d = J W Sigma W^T J^T + 0.3 I. Returns nothing when
/// the mean's depth is outside (near, far) or the 3-sigma box misses the
/// image.
std::optional<Splat2D> project_gaussian(const FacetGaussian &gaussian, const Camera &camera);

struct ProjectGradients {
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Zero();
};

/// Chain rule through project_gaussian. `grad_cov2d` is taken entry-wise.
ProjectGradients project_backward(const FacetGaussian &gaussian, const Camera &camera,
                                  const Vec2 &grad_mean2d, const Mat2 &grad_cov2d);

struct RenderOutput {
    Image rgb;
    Image alpha;
    Vec3 background = Vec3::Zero();
};

/// Forward state kept for the backward pass.
struct RasterTrace {
    int tiles_x = 0;
    int tiles_y = 0;
    /// Splat indices per tile, sorted by (depth, source).
    std::vector<std::vector<int>> tile_splats;
    std::vector<PixelRect> rects;
    std::vector<Mat2> conics;
    /// Per pixel: transmittance after compositing.
    std::vector<double> final_transmittance;
    /// Per pixel: number of tile-list entries that were walked.
    std::vector<int> walked;
};

/// Tile-based front-to-back compositing. Throws NonFiniteError on NaN/Inf
/// splat parameters.
RenderOutput rasterize(std::span<const Splat2D> splats, const Camera &camera, const Vec3 &background,
                       RasterTrace *trace = nullptr);

struct SplatGradients {
    std::vector<Vec2> mean;
    std::vector<Mat2> cov;
    std::vector<Vec3> color;
    std::vector<double> opacity;
};

/// Exact gradients of the compositing equations. When `trace` is null the
/// forward pass is recomputed. Accumulation is tile-major, then by position
/// in the tile list, then pixel row-major, independent of thread count.
SplatGradients rasterize_backward(std::span<const Splat2D> splats, const Camera &camera,
                                  const RenderOutput &output, const Image &grad_rgb,
                                  const Image &grad_alpha, const RasterTrace *trace = nullptr);

/// Pixels whose value is within `margin` of a non-smooth point of the
/// compositing rules: the alpha clamp, the 1/255 floor, the transmittance
/// stop, or a 3-sigma box edge crossing a tile/image boundary. Used to
/// mask finite-difference checks.
std::vector<bool> discontinuity_mask(std::span<const Splat2D> splats, const Camera &camera,
                                     const RasterTrace &trace, double relative_margin = 1e-4,
                                     double pixel_margin = 1e-3);

struct RenderOptions {
    ConvertOptions convert;
    Vec3 background = Vec3::Zero();
};

struct MeshRenderTrace {
    std::vector<FacetGaussian> gaussians;
    std::vector<Splat2D> splats;
    RasterTrace raster;
    RenderOutput output;
};

/// convert_mesh -> project_gaussian -> rasterize.
MeshRenderTrace render_mesh_traced(const TriangleMesh &mesh, const Camera &camera,
                                   const RenderOptions &options = {});

RenderOutput render_mesh(const TriangleMesh &mesh, const Camera &camera, const RenderOptions &options = {});

/// Vertex position and vertex color gradients of a scalar loss with
/// image-space gradients `grad_rgb` (H x W x 3) and `grad_alpha` (H x W).
/// Requires the embed covariance path.
ConvertGradients render_mesh_backward(const TriangleMesh &mesh, const Camera &camera,
                                      const RenderOptions &options, const MeshRenderTrace &trace,
                                      const Image &grad_rgb, const Image &grad_alpha);

} // namespace gmr

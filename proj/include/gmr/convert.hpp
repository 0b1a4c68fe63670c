#pragma once

#include "gmr/mesh.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace gmr {

/// Thickness of every facet Gaussian along its normal.
constexpr double kNormalScale = 1e-6;
/// Floor on lambda1 * lambda2 in the area-matching factor.
constexpr double kKappaEpsilon = 1e-14;
/// Below this, an edge length or in-plane height counts as zero.
constexpr double kFrameTolerance = 1e-12;

/// Orthonormal frame on a facet with the origin at the first vertex and the
/// x axis along the first edge. The triangle in local coordinates is
/// (0, 0), (xj, 0), (xk, yk).
struct FacetFrame {
    Vec3 origin = Vec3::Zero();
    Vec3 x_axis = Vec3::UnitX();
    Vec3 y_axis = Vec3::UnitY();
    Vec3 normal = Vec3::UnitZ();
    Vec2 vj_2d = Vec2::Zero();
    Vec2 vk_2d = Vec2::Zero();
    bool degenerate = false;

    /// Columns x_axis, y_axis, normal.
    Mat3 rotation() const;
    Vec3 to_world(const Vec2 &local) const { return origin + local.x() * x_axis + local.y() * y_axis; }
};

FacetFrame build_facet_frame(const Vec3 &vi, const Vec3 &vj, const Vec3 &vk);

/// Moments of the uniform distribution over the triangle, in frame
/// coordinates.
struct Moments2D {
    Vec2 mu = Vec2::Zero();
    /// E[x^2], E[xy], E[y^2].
    Vec3 second_moments = Vec3::Zero();
    Mat2 cov2d = Mat2::Zero();
    double area = 0.0;
};

Moments2D triangle_moments(const FacetFrame &frame);

/// kappa = |A| / (pi * sqrt(max(det, eps))); det(cov2d) = lambda1 * lambda2.
double area_match_factor(const Moments2D &moments);

enum class CovariancePath { Eigen, Embed };

struct FacetGaussian {
    Vec3 mean = Vec3::Zero();
    Mat3 cov3d = Mat3::Identity();
    /// Factored form cov3d = R diag(s^2) R^T. Columns: major in-plane axis,
    /// minor in-plane axis, facet normal. det(R) = +1.
    Mat3 rotation = Mat3::Identity();
    Vec3 scales = Vec3::Constant(kNormalScale);
    double opacity = 1.0;
    Vec3 color_dc = kDefaultGray;
    int source_facet = -1;
};

/// Sorted eigen-decomposition of a symmetric 2x2 matrix with the sign and
/// tie conventions used for lifting: lambda1 >= lambda2, u1 has a
/// non-negative x component (non-negative y on a tie), u2 = rot90(u1), and
/// U = I when the eigenvalues agree within 1e-12.
struct SymEigen2 {
    Vec2 values = Vec2::Zero();
    Mat2 vectors = Mat2::Identity();
};

SymEigen2 sym_eigen2(const Mat2 &m);

/// Geometry from the principal-axis construction: eigen-decompose cov2d,
/// rescale both variances by kappa, rotate the frame onto the principal axes.
FacetGaussian lift_covariance_eigen(const Moments2D &moments, const FacetFrame &frame);

/// Geometry from embedding the in-plane covariance (kappa-scaled when
/// `rescale`) directly in the facet frame, with s_z^2 along the normal.
/// The factored rotation/scales are still filled in, for export.
FacetGaussian lift_covariance_embed(const Moments2D &moments, const FacetFrame &frame, bool rescale = true);

Vec3 facet_color(const Vec3 &ci, const Vec3 &cj, const Vec3 &ck);

struct ConvertOptions {
    CovariancePath path = CovariancePath::Embed;
    bool rescale = true;
};

/// One Gaussian per facet, including degenerate facets.
std::vector<FacetGaussian> convert_mesh(const TriangleMesh &mesh, const ConvertOptions &options = {});

struct ConvertGradients {
    std::vector<Vec3> vertices;
    std::vector<Vec3> colors;
};

/// Reverse-mode derivative of the embed-path conversion. `grad_cov3ds` are
/// dL/dSigma entry-wise (need not be symmetric). Throws ShapeError on
/// length mismatch.
ConvertGradients convert_backward(const TriangleMesh &mesh, std::span<const FacetGaussian> gaussians,
                                  std::span<const Vec3> grad_means, std::span<const Mat3> grad_cov3ds,
                                  std::span<const Vec3> grad_colors, bool rescale = true);

/// Zeroth-order spherical harmonic basis constant.
constexpr double kShC0 = 0.28209479177387814;
/// Opacity written for o = 1, clamped so the logit stays finite.
constexpr double kExportOpacity = 1.0 - 1e-6;
/// Scales are floored here before taking the log.
constexpr double kExportMinScale = 1e-12;

/// Writes the common splatting point-cloud PLY (x, y, z, f_dc_0..2,
/// opacity as logit, scale_0..2 as log, rot_0..3 as w-first quaternion),
/// binary little-endian.
void export_gaussians(std::span<const FacetGaussian> gaussians, const std::filesystem::path &path);

/// Reads a file written by export_gaussians (or any PLY with the same
/// properties) back into activated values. cov3d is rebuilt from the
/// factored form; source_facet is the row index.
std::vector<FacetGaussian> import_gaussians(const std::filesystem::path &path);

Eigen::Quaterniond rotation_to_quaternion(const Mat3 &rotation);

} // namespace gmr

#pragma once

// Independent reference implementations used by the tests. None of these
// share code paths with the library beyond plain data types.

#include "gmr/camera.hpp"
#include "gmr/mesh.hpp"
#include "gmr/render.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace gmr::oracle {

/// Sample mean and covariance of points drawn uniformly from the 2D
/// triangle (0, a, b), plus the standard error of each covariance entry.
struct McMoments {
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Zero();
    Mat2 cov_stderr = Mat2::Zero();
};
McMoments monte_carlo_triangle(const Vec2 &a, const Vec2 &b, std::size_t n, std::uint64_t seed);

/// Central differences of a scalar function of a parameter vector.
std::vector<double> central_gradient(const std::function<double(const std::vector<double> &)> &f,
                                     std::vector<double> x, double h);

/// |a - b| / max(|a|, |b|, floor) over whole vectors.
double relative_error(const std::vector<double> &a, const std::vector<double> &b, double floor = 1e-12);

/// Per-pixel compositing with no tiling: every splat whose 3-sigma tile
/// range covers the pixel's tile is visited in (depth, source, index) order.
RenderOutput brute_force_composite(const std::vector<Splat2D> &splats, const Camera &camera,
                                   const Vec3 &background);

/// O(n m) nearest-neighbor chamfer distance (squared, symmetric mean).
double brute_force_chamfer(const std::vector<Vec3> &a, const std::vector<Vec3> &b);

/// Uniformly random rotation (QR of a Gaussian matrix, sign-fixed).
Mat3 random_rotation(std::mt19937_64 &rng);

TriangleMesh octahedron(double radius = 1.0);
TriangleMesh icosahedron();

/// Unit-cube-like test target: a subdivided cube normalized to diameter 2
/// with colors 0.5 + 0.5 * position.
TriangleMesh toy_cube(int subdivisions = 4);

/// Deterministic smooth test images (also reproduced in the Python script
/// that produced frozen SSIM values).
Image pattern_image(int width, int height, int channels, int variant);

} // namespace gmr::oracle

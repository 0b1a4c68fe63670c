#pragma once

#include "gmr/image.hpp"
#include "gmr/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gmr {

constexpr std::size_t kDefaultMetricSamples = 100000;
/// PSNR of identical images is +inf; CSV output caps it here.
constexpr double kPsnrCap = 99.0;

/// Symmetric chamfer distance in squared units:
/// 0.5 * (mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2).
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);

/// Samples `n` points on each mesh with the same seed and returns the
/// chamfer distance between the two sets. Throws GeometryError on a mesh
/// with no area.
double chamfer_distance(const TriangleMesh &pred, const TriangleMesh &gt, std::size_t n = kDefaultMetricSamples,
                        std::uint64_t seed = 0);

/// Mean |n_a . n_b| over nearest-sample correspondences, averaged over
/// both directions. In [0, 1] and blind to winding.
double normal_consistency(const SurfaceSamples &a, const SurfaceSamples &b);
double normal_consistency(const TriangleMesh &pred, const TriangleMesh &gt,
                          std::size_t n = kDefaultMetricSamples, std::uint64_t seed = 0);

/// 10 log10(1 / MSE); +inf for identical images.
double psnr(const Image &a, const Image &b);

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, data range 1. Averaged over the valid (unpadded) window
/// positions and over channels.
double ssim(const Image &a, const Image &b);

struct ViewMetric {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    double cd = 0.0;
    double nc = 0.0;
    std::vector<ViewMetric> views;

    double mean_psnr() const;
    double mean_ssim() const;
    std::string summary() const;
};

/// One row per view plus a final "mean" row carrying cd and nc.
void write_metric_csv(const MetricReport &report, const std::filesystem::path &path);

} // namespace gmr

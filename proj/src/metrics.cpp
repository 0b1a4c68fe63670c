#include "gmr/metrics.hpp"

#include "gmr/error.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace gmr {

namespace {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using BValue = std::pair<BPoint, int>;
using RTree = bgi::rtree<BValue, bgi::quadratic<16>>;

RTree build_index(std::span<const Vec3> points) {
    std::vector<BValue> values;
    values.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        values.emplace_back(BPoint(points[i].x(), points[i].y(), points[i].z()), static_cast<int>(i));
    }
    // Packing constructor (STR bulk load): deterministic for a given input.
    return RTree(values.begin(), values.end());
}

/// Index of the nearest point in `index` for every query.
std::vector<int> nearest_indices(const RTree &index, std::span<const Vec3> queries) {
    std::vector<int> out(queries.size(), -1);
    const long n = static_cast<long>(queries.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const Vec3 &q = queries[i];
        std::array<BValue, 1> hit;
        if (index.query(bgi::nearest(BPoint(q.x(), q.y(), q.z()), 1), hit.begin()) > 0) {
            out[i] = hit[0].second;
        }
    }
    return out;
}

double mean_squared_nn(std::span<const Vec3> from, std::span<const Vec3> to) {
    const RTree index = build_index(to);
    const std::vector<int> nn = nearest_indices(index, from);
    double sum = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        sum += (from[i] - to[nn[i]]).squaredNorm();
    }
    return sum / static_cast<double>(from.size());
}

double mean_abs_cosine(const SurfaceSamples &from, const SurfaceSamples &to) {
    const RTree index = build_index(to.points);
    const std::vector<int> nn = nearest_indices(index, from.points);
    double sum = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        sum += std::abs(from.normals[i].dot(to.normals[nn[i]]));
    }
    return sum / static_cast<double>(from.size());
}

void require_points(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) {
        throw GeometryError("chamfer distance needs two non-empty point sets");
    }
}

void require_mesh(const TriangleMesh &mesh, const char *which) {
    if (mesh.facets.empty() || total_area(mesh) <= 0.0) {
        throw GeometryError(std::string(which) + " mesh has no surface area");
    }
}

void require_same_shape(const Image &a, const Image &b, const char *what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": images differ in shape");
    }
}

/// Normalized 1D Gaussian taps.
std::array<double, kSsimWindow> gaussian_taps() {
    std::array<double, kSsimWindow> taps{};
    const int r = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        taps[i + r] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
        sum += taps[i + r];
    }
    for (double &t : taps) {
        t /= sum;
    }
    return taps;
}

/// Separable valid-mode filter of a single-channel w x h plane.
std::vector<double> filter_valid(const std::vector<double> &plane, int w, int h,
                                 const std::array<double, kSsimWindow> &taps) {
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                acc += taps[k] * plane[static_cast<std::size_t>(y) * w + x + k];
            }
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                acc += taps[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            }
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

} // namespace

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
    require_points(a, b);
    const double ab = mean_squared_nn(a, b);
    const double ba = mean_squared_nn(b, a);
    return 0.5 * (ab + ba);
}

double chamfer_distance(const TriangleMesh &pred, const TriangleMesh &gt, std::size_t n, std::uint64_t seed) {
    require_mesh(pred, "predicted");
    require_mesh(gt, "ground-truth");
    if (n == 0) {
        throw ConfigError("chamfer distance needs at least one sample");
    }
    const SurfaceSamples a = sample_surface(pred, n, seed);
    const SurfaceSamples b = sample_surface(gt, n, seed);
    return chamfer_distance(a.points, b.points);
}

double normal_consistency(const SurfaceSamples &a, const SurfaceSamples &b) {
    if (a.size() == 0 || b.size() == 0) {
        throw GeometryError("normal consistency needs two non-empty sample sets");
    }
    return 0.5 * (mean_abs_cosine(a, b) + mean_abs_cosine(b, a));
}

double normal_consistency(const TriangleMesh &pred, const TriangleMesh &gt, std::size_t n, std::uint64_t seed) {
    require_mesh(pred, "predicted");
    require_mesh(gt, "ground-truth");
    if (n == 0) {
        throw ConfigError("normal consistency needs at least one sample");
    }
    return normal_consistency(sample_surface(pred, n, seed), sample_surface(gt, n, seed));
}

double psnr(const Image &a, const Image &b) {
    require_same_shape(a, b, "psnr");
    if (a.size() == 0) {
        throw ShapeError("psnr: empty images");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image &a, const Image &b) {
    require_same_shape(a, b, "ssim");
    const int w = a.width();
    const int h = a.height();
    if (w < kSsimWindow || h < kSsimWindow) {
        throw ShapeError("ssim: images must be at least " + std::to_string(kSsimWindow) + "x" +
                         std::to_string(kSsimWindow));
    }
    constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
    constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
    const auto taps = gaussian_taps();
    const int nc = a.channels();
    const std::size_t np = static_cast<std::size_t>(w) * h;

    double total = 0.0;
    for (int c = 0; c < nc; ++c) {
        std::vector<double> pa(np), pb(np), paa(np), pbb(np), pab(np);
        for (std::size_t i = 0; i < np; ++i) {
            const double x = a.data()[i * nc + c];
            const double y = b.data()[i * nc + c];
            pa[i] = x;
            pb[i] = y;
            paa[i] = x * x;
            pbb[i] = y * y;
            pab[i] = x * y;
        }
        const auto mu_a = filter_valid(pa, w, h, taps);
        const auto mu_b = filter_valid(pb, w, h, taps);
        const auto e_aa = filter_valid(paa, w, h, taps);
        const auto e_bb = filter_valid(pbb, w, h, taps);
        const auto e_ab = filter_valid(pab, w, h, taps);
        double sum = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i];
            const double mb = mu_b[i];
            const double va = e_aa[i] - ma * ma;
            const double vb = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / static_cast<double>(mu_a.size());
    }
    return total / nc;
}

double MetricReport::mean_psnr() const {
    if (views.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto &v : views) {
        s += std::min(v.psnr, kPsnrCap);
    }
    return s / static_cast<double>(views.size());
}

double MetricReport::mean_ssim() const {
    if (views.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto &v : views) {
        s += v.ssim;
    }
    return s / static_cast<double>(views.size());
}

std::string MetricReport::summary() const {
    std::ostringstream os;
    os << std::setprecision(6);
    os << "CD (squared): " << cd << "\n";
    os << "NC:           " << nc << "\n";
    os << "PSNR (mean):  " << mean_psnr() << " dB over " << views.size() << " views\n";
    os << "SSIM (mean):  " << mean_ssim() << "\n";
    return os.str();
}

void write_metric_csv(const MetricReport &report, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << std::setprecision(10);
    out << "view,psnr,ssim,cd,nc\n";
    for (const auto &v : report.views) {
        out << v.name << "," << std::min(v.psnr, kPsnrCap) << "," << v.ssim << ",,\n";
    }
    out << "mean," << report.mean_psnr() << "," << report.mean_ssim() << "," << report.cd << "," << report.nc
        << "\n";
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

} // namespace gmr

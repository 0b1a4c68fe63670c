#include "gmr/error.hpp"
#include "gmr/metrics.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace gmr;
using gmr::testing::ScratchDir;

namespace {

std::vector<Vec3> random_points(std::mt19937_64 &rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> out(n);
    for (auto &p : out) {
        p = {u(rng), u(rng), u(rng)};
    }
    return out;
}

TriangleMesh flipped(TriangleMesh m) {
    for (auto &f : m.facets) {
        std::swap(f[1], f[2]);
    }
    return m;
}

} // namespace

TEST(Chamfer, MatchesBruteForce) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        const auto a = random_points(rng, 300 + 50 * trial);
        const auto b = random_points(rng, 200 + 70 * trial);
        EXPECT_NEAR(chamfer_distance(a, b), oracle::brute_force_chamfer(a, b), 1e-15);
        EXPECT_EQ(chamfer_distance(a, b), chamfer_distance(b, a));
    }
}

TEST(Chamfer, HandValueAndErrors) {
    const std::vector<Vec3> a{Vec3(0, 0, 0)};
    const std::vector<Vec3> b{Vec3(1, 0, 0), Vec3(0, 2, 0)};
    // a->b: 1; b->a: (1 + 4) / 2.
    EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 0.5 * (1.0 + 2.5));
    EXPECT_EQ(chamfer_distance(a, a), 0.0);
    EXPECT_THROW(chamfer_distance(std::vector<Vec3>{}, b), GeometryError);
}

TEST(Chamfer, ConcentricSpheres) {
    // Nearest-point distance between spheres of radius 1 and 1.1 is 0.1.
    const TriangleMesh a = make_icosphere(20480, 1.0);
    const TriangleMesh b = make_icosphere(20480, 1.1);
    EXPECT_NEAR(chamfer_distance(a, b, 100000, 1), 0.01, 0.002);
}

TEST(Chamfer, SelfDistance) {
    const TriangleMesh m = oracle::toy_cube(4);
    EXPECT_EQ(chamfer_distance(m, m, 20000, 5), 0.0);
    const SurfaceSamples a = sample_surface(m, 100000, 1);
    const SurfaceSamples b = sample_surface(m, 100000, 2);
    EXPECT_LT(chamfer_distance(a.points, b.points), 1e-4);
}

TEST(Chamfer, DegenerateMeshesThrow) {
    TriangleMesh empty;
    EXPECT_THROW(chamfer_distance(empty, oracle::octahedron(), 100, 0), GeometryError);
    TriangleMesh flat;
    flat.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    flat.colors.assign(3, kDefaultGray);
    flat.facets = {{0, 1, 2}};
    EXPECT_THROW(chamfer_distance(flat, oracle::octahedron(), 100, 0), GeometryError);
}

TEST(NormalConsistency, SelfAndWindingInvariance) {
    const TriangleMesh m = make_icosphere(5120);
    const double self = normal_consistency(m, m, 100000, 3);
    EXPECT_GE(self, 0.99);
    EXPECT_EQ(normal_consistency(flipped(m), m, 100000, 3), self);
    EXPECT_EQ(normal_consistency(m, flipped(m), 100000, 3), self);

    SurfaceSamples a = sample_surface(oracle::toy_cube(4), 5000, 1);
    const SurfaceSamples b = sample_surface(make_icosphere(320), 5000, 2);
    const double before = normal_consistency(a, b);
    for (auto &n : a.normals) {
        n = -n;
    }
    EXPECT_EQ(normal_consistency(a, b), before);
}

TEST(NormalConsistency, HandValueAndOrdering) {
    SurfaceSamples a;
    a.points = {Vec3(0, 0, 0)};
    a.normals = {Vec3(0, 0, 1)};
    SurfaceSamples b;
    b.points = {Vec3(0, 0, 0.1)};
    b.normals = {Vec3(0, std::sin(0.5), -std::cos(0.5))};
    EXPECT_NEAR(normal_consistency(a, b), std::cos(0.5), 1e-15);

    const TriangleMesh sphere = make_icosphere(5120);
    const TriangleMesh cube = oracle::toy_cube(8);
    const double good = normal_consistency(sphere, make_icosphere(5120, 1.0), 50000, 4);
    const double bad = normal_consistency(sphere, cube, 50000, 4);
    EXPECT_LT(bad, good);
    EXPECT_LT(bad, 0.95);
}

TEST(Psnr, KnownValues) {
    const Image a(8, 8, 3, 0.5);
    Image b(8, 8, 3, 0.6);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
    EXPECT_NEAR(psnr(Image(4, 4, 1, 0.0), Image(4, 4, 1, 1.0)), 0.0, 1e-12);
    EXPECT_THROW(psnr(a, Image(8, 7, 3)), ShapeError);
}

TEST(Psnr, MatchesReferenceValue) {
    // tools/ssim_reference.py
    const Image a = oracle::pattern_image(48, 40, 3, 0);
    const Image b = oracle::pattern_image(48, 40, 3, 1);
    EXPECT_NEAR(psnr(a, b), 11.223596020554620, 1e-9);
}

TEST(Ssim, IdenticalAndInverted) {
    const Image a = oracle::pattern_image(32, 32, 3, 1);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    Image neg = a;
    for (double &v : neg.data()) {
        v = 1.0 - v;
    }
    EXPECT_LT(ssim(a, neg), 0.0);
}

TEST(Ssim, ConstantImagesMatchFormula) {
    // Zero variance: SSIM reduces to the luminance term.
    const double c1 = 1e-4;
    const double expect = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    EXPECT_NEAR(ssim(Image(20, 16, 3, 0.5), Image(20, 16, 3, 0.6)), expect, 1e-12);
}

TEST(Ssim, MatchesScikitImage) {
    // Frozen from tools/ssim_reference.py (gaussian_weights, sigma 1.5,
    // population covariance, data_range 1, channel mean).
    struct Case {
        int w, h, c, va, vb;
        double expect;
    };
    for (const Case &k : {Case{48, 40, 3, 0, 1, 0.002354304861260}, Case{48, 40, 3, 0, 3, 0.044598218428455},
                          Case{32, 32, 3, 2, 5, -0.400778184179818}, Case{40, 40, 1, 4, 6, -0.441516224615965}}) {
        const Image a = oracle::pattern_image(k.w, k.h, k.c, k.va);
        const Image b = oracle::pattern_image(k.w, k.h, k.c, k.vb);
        EXPECT_NEAR(ssim(a, b), k.expect, 1e-9) << k.va << "," << k.vb;
    }
    const Image a = oracle::pattern_image(48, 40, 3, 0);
    const Image p = oracle::pattern_image(48, 40, 3, 1);
    Image b = a;
    for (std::size_t i = 0; i < b.size(); ++i) {
        b.data()[i] = 0.8 * a.data()[i] + 0.2 * p.data()[i];
    }
    EXPECT_NEAR(ssim(a, b), 0.922022679867536, 1e-9);
    EXPECT_NEAR(psnr(a, b), 25.202996107274998, 1e-9);
}

TEST(Ssim, RejectsSmallOrMismatched) {
    EXPECT_THROW(ssim(Image(10, 20, 3), Image(10, 20, 3)), ShapeError);
    EXPECT_THROW(ssim(Image(20, 20, 3), Image(20, 20, 1)), ShapeError);
    EXPECT_NO_THROW(ssim(Image(11, 11, 1), Image(11, 11, 1)));
}

TEST(MetricReport, MeansCapsAndCsv) {
    ScratchDir dir;
    MetricReport r;
    r.cd = 0.5;
    r.nc = 0.75;
    r.views = {{"view_0000", 30.0, 0.9}, {"view_0001", std::numeric_limits<double>::infinity(), 1.0}};
    EXPECT_DOUBLE_EQ(r.mean_psnr(), (30.0 + kPsnrCap) / 2.0);
    EXPECT_DOUBLE_EQ(r.mean_ssim(), 0.95);
    write_metric_csv(r, dir / "m.csv");
    const std::string csv = gmr::testing::read_file(dir / "m.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "view,psnr,ssim,cd,nc");
    EXPECT_NE(csv.find("view_0001,99"), std::string::npos);
    EXPECT_NE(csv.find("\nmean,"), std::string::npos);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_FALSE(r.summary().empty());
}

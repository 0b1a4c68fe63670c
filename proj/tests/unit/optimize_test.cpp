#include "gmr/error.hpp"
#include "gmr/optimize.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace gmr;
using gmr::testing::ScratchDir;

namespace {

std::vector<Vec3> random_grads(std::mt19937_64 &rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<Vec3> out(n);
    for (auto &v : out) {
        v = {g(rng), g(rng), g(rng)};
    }
    return out;
}

} // namespace

TEST(VectorAdam, HandExampleWithoutMomentum) {
    VectorAdam opt(1, {0.01, 0.0, 0.0, 1e-8});
    const std::vector<Vec3> g{Vec3(3, 4, 0)};
    const auto d = opt.step(g);
    EXPECT_LT((d[0] - (-0.01 * Vec3(3, 4, 0) / (5.0 + 1e-8))).norm(), 1e-17);
    EXPECT_LT(d[0].normalized().cross(Vec3(3, 4, 0).normalized()).norm(), 1e-15);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(VectorAdam, FirstStepWithDefaultsIsNormalized) {
    // Bias correction makes the first step -lr * g / (|g| + eps).
    VectorAdam opt(2, {1e-3, 0.9, 0.999, 1e-8});
    const std::vector<Vec3> g{Vec3(1, -2, 2), Vec3(0, 0, 1e3)};
    const auto d = opt.step(g);
    EXPECT_LT((d[0] - (-1e-3 * g[0] / (3.0 + 1e-8))).norm(), 1e-15);
    EXPECT_LT((d[1] - Vec3(0, 0, -1e-3 * 1e3 / (1e3 + 1e-8))).norm(), 1e-15);
}

TEST(VectorAdam, MomentsFollowTheRecurrence) {
    std::mt19937_64 rng(2);
    const AdamHyper h{0.02, 0.8, 0.95, 1e-8};
    VectorAdam opt(3, h);
    std::vector<Vec3> m(3, Vec3::Zero());
    std::vector<double> v(3, 0.0);
    for (int t = 1; t <= 7; ++t) {
        const auto g = random_grads(rng, 3);
        const auto d = opt.step(g);
        for (std::size_t i = 0; i < 3; ++i) {
            m[i] = h.beta1 * m[i] + (1 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1 - h.beta2) * g[i].squaredNorm();
            const Vec3 mh = m[i] / (1 - std::pow(h.beta1, t));
            const double vh = v[i] / (1 - std::pow(h.beta2, t));
            EXPECT_LT((d[i] - (-h.lr * mh / (std::sqrt(vh) + h.eps))).norm(), 1e-15);
            EXPECT_GE(opt.second_moment()[i], 0.0);
        }
    }
}

TEST(VectorAdam, ZeroGradientNeverMoves) {
    VectorAdam opt(4, {});
    const std::vector<Vec3> g(4, Vec3::Zero());
    for (int t = 0; t < 50; ++t) {
        for (const auto &d : opt.step(g)) {
            EXPECT_EQ(d, Vec3::Zero());
        }
    }
}

TEST(VectorAdam, RotationEquivariance) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat3 q = oracle::random_rotation(rng);
        VectorAdam a(5, {});
        VectorAdam b(5, {});
        for (int t = 0; t < 10; ++t) {
            const auto g = random_grads(rng, 5, std::exp(std::normal_distribution<double>(0, 2)(rng)));
            std::vector<Vec3> rg(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                rg[i] = q * g[i];
            }
            const auto da = a.step(g);
            const auto db = b.step(rg);
            for (std::size_t i = 0; i < g.size(); ++i) {
                EXPECT_LT((db[i] - q * da[i]).norm(), 1e-12);
            }
        }
    }
}

TEST(ScalarAdam, IsNotRotationEquivariant) {
    // Sanity check that the equivariance test above can fail.
    std::mt19937_64 rng(4);
    const Mat3 q = oracle::random_rotation(rng);
    ScalarAdam a(1, {});
    ScalarAdam b(1, {});
    const std::vector<Vec3> g{Vec3(1, 0, 0)};
    const std::vector<Vec3> rg{q * g[0]};
    const auto da = a.step(g);
    const auto db = b.step(rg);
    EXPECT_GT((db[0] - q * da[0]).norm(), 1e-4);
}

TEST(VectorAdam, StepBoundForUnitNormGradients) {
    std::mt19937_64 rng(5);
    VectorAdam opt(50, {1e-3, 0.9, 0.999, 1e-8});
    for (int t = 0; t < 200; ++t) {
        auto g = random_grads(rng, 50);
        for (auto &x : g) {
            x.normalize();
        }
        for (const auto &d : opt.step(g)) {
            EXPECT_LE(d.norm(), 1e-3 * (1.0 + 1e-12));
        }
    }
}

TEST(VectorAdam, StepBoundGeneral) {
    // |m_hat| <= sqrt(sum_k a_k^2 / b_k) * sqrt(v_hat) by Cauchy-Schwarz, with
    // a_k, b_k the bias-corrected moment weights of step k.
    std::mt19937_64 rng(6);
    const AdamHyper h{1e-3, 0.9, 0.999, 1e-8};
    VectorAdam opt(30, h);
    std::lognormal_distribution<double> mag(0.0, 3.0);
    for (int t = 1; t <= 100; ++t) {
        auto g = random_grads(rng, 30);
        for (auto &x : g) {
            x *= mag(rng);
        }
        double c2 = 0.0;
        for (int k = 1; k <= t; ++k) {
            const double a = (1 - h.beta1) * std::pow(h.beta1, t - k) / (1 - std::pow(h.beta1, t));
            const double b = (1 - h.beta2) * std::pow(h.beta2, t - k) / (1 - std::pow(h.beta2, t));
            c2 += a * a / b;
        }
        for (const auto &d : opt.step(g)) {
            EXPECT_LE(d.norm(), h.lr * std::sqrt(c2) * (1.0 + 1e-12));
        }
    }
}

TEST(VectorAdam, NonFiniteGradientLeavesStateUnchanged) {
    std::mt19937_64 rng(7);
    VectorAdam opt(3, {});
    opt.step(random_grads(rng, 3));
    const auto m = opt.first_moment();
    const auto v = opt.second_moment();
    auto bad = random_grads(rng, 3);
    bad[1].y() = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(opt.step(bad), NonFiniteError);
    bad[1].y() = std::numeric_limits<double>::infinity();
    EXPECT_THROW(opt.step(bad), NonFiniteError);
    EXPECT_EQ(opt.steps(), 1u);
    EXPECT_EQ(opt.first_moment(), m);
    EXPECT_EQ(opt.second_moment(), v);
    EXPECT_THROW(opt.step(random_grads(rng, 2)), ShapeError);
}

TEST(ScalarAdam, PerComponentUpdate) {
    ScalarAdam opt(1, {0.1, 0.0, 0.0, 1e-12});
    const auto d = opt.step(std::vector<Vec3>{Vec3(3, -4, 0)});
    EXPECT_LT((d[0] - Vec3(-0.1, 0.1, 0.0)).norm(), 1e-12);
}

TEST(CosineSchedule, EndpointsAndMonotone) {
    EXPECT_DOUBLE_EQ(cosine_lr_factor(0, 100, 0.1), 1.0);
    EXPECT_DOUBLE_EQ(cosine_lr_factor(99, 100, 0.1), 0.1);
    EXPECT_NEAR(cosine_lr_factor(50, 101, 0.1), 0.55, 1e-15);
    EXPECT_DOUBLE_EQ(cosine_lr_factor(0, 1, 0.1), 1.0);
    for (int i = 1; i < 100; ++i) {
        EXPECT_LE(cosine_lr_factor(i, 100, 0.1), cosine_lr_factor(i - 1, 100, 0.1));
    }
}

TEST(ViewSampler, EachEpochIsAPermutation) {
    ViewSampler s(20, 42);
    for (int epoch = 0; epoch < 5; ++epoch) {
        std::set<std::size_t> seen;
        for (int i = 0; i < 20; ++i) {
            seen.insert(s.next(1)[0]);
        }
        EXPECT_EQ(seen.size(), 20u);
    }
}

TEST(ViewSampler, BatchesNeverRepeatAndAreSeeded) {
    ViewSampler a(13, 9);
    ViewSampler b(13, 9);
    ViewSampler c(13, 10);
    bool differs = false;
    for (int i = 0; i < 40; ++i) {
        const auto x = a.next(5);
        EXPECT_EQ(x, b.next(5));
        differs = differs || x != c.next(5);
        EXPECT_EQ(std::set<std::size_t>(x.begin(), x.end()).size(), 5u);
    }
    EXPECT_TRUE(differs);
    EXPECT_EQ(ViewSampler(3, 0).next(10).size(), 3u);
    EXPECT_THROW(ViewSampler(0, 0), ConfigError);
}

TEST(ShiftInitialization, MovesCentroidExactly) {
    const TriangleMesh m = make_icosphere(80);
    const TriangleMesh same = shift_initialization(m, Vec3::Zero());
    EXPECT_EQ(same.vertices, m.vertices);
    const TriangleMesh moved = shift_initialization(m, Vec3(0.5, 0, 0));
    Vec3 c0 = Vec3::Zero();
    Vec3 c1 = Vec3::Zero();
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        c0 += m.vertices[i];
        c1 += moved.vertices[i];
    }
    EXPECT_NEAR(((c1 - c0) / m.vertices.size() - Vec3(0.5, 0, 0)).norm(), 0.0, 1e-15);
    EXPECT_EQ(moved.facets, m.facets);
}

TEST(OptimizerState, SaveLoadRoundTrip) {
    ScratchDir dir;
    std::mt19937_64 rng(8);
    VectorAdam p(6, {});
    ScalarAdam c(6, {});
    for (int i = 0; i < 3; ++i) {
        p.step(random_grads(rng, 6));
        c.step(random_grads(rng, 6));
    }
    save_optimizer_state(p, c, dir / "s.state");
    VectorAdam p2(6, {});
    ScalarAdam c2(6, {});
    load_optimizer_state(p2, c2, dir / "s.state");
    EXPECT_EQ(p2.steps(), 3u);
    EXPECT_EQ(p2.first_moment(), p.first_moment());
    EXPECT_EQ(p2.second_moment(), p.second_moment());
    EXPECT_EQ(c2.second_moment(), c.second_moment());
    const auto g = random_grads(rng, 6);
    EXPECT_EQ(p.step(g), p2.step(g));

    VectorAdam wrong(5, {});
    ScalarAdam wrong_c(5, {});
    EXPECT_THROW(load_optimizer_state(wrong, wrong_c, dir / "s.state"), ShapeError);
    dir.write("junk.state", "not a state file");
    EXPECT_THROW(load_optimizer_state(p2, c2, dir / "junk.state"), Error);
}

namespace {

std::vector<View> self_views(const TriangleMesh &target, int n, int res) {
    std::vector<View> views;
    for (int i = 0; i < n; ++i) {
        const double a = 2.0 * 3.14159265358979 * i / n;
        View v;
        v.camera = look_at({3 * std::cos(a), 3 * std::sin(a), 1.5}, Vec3::Zero(), Vec3::UnitZ(), res, res, 50.0);
        const RenderOutput out = render_mesh(target, v.camera);
        v.target.rgb = out.rgb;
        v.target.mask = Image(res, res, 1);
        for (std::size_t p = 0; p < out.alpha.size(); ++p) {
            v.target.mask.data()[p] = out.alpha.data()[p] > 0.5 ? 1.0 : 0.0;
        }
        views.push_back(std::move(v));
    }
    return views;
}

} // namespace

TEST(Fit, ZeroIterationsReturnsInitialMesh) {
    const TriangleMesh m = make_icosphere(80);
    FitConfig cfg;
    cfg.iterations = 0;
    const auto views = self_views(m, 2, 16);
    const FitResult r = fit(m, views, cfg);
    EXPECT_EQ(r.mesh.vertices, m.vertices);
    EXPECT_EQ(r.mesh.colors, m.colors);
    EXPECT_TRUE(r.history.empty());
}

TEST(Fit, RejectsBadConfig) {
    const TriangleMesh m = make_icosphere(80);
    const auto views = self_views(m, 1, 16);
    FitConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(fit(m, views, cfg), ConfigError);
    cfg = {};
    cfg.position.lr = -1.0;
    EXPECT_THROW(fit(m, views, cfg), ConfigError);
    cfg = {};
    cfg.checkpoint_every = 5;
    EXPECT_THROW(fit(m, views, cfg), ConfigError);
    EXPECT_THROW(fit(m, std::span<const View>(), FitConfig{}), ConfigError);
}

TEST(Fit, SelfFitColorsConverge) {
    // Same geometry as the target; only the colors start wrong.
    TriangleMesh target = make_icosphere(320);
    for (std::size_t i = 0; i < target.vertices.size(); ++i) {
        target.colors[i] = (0.5 * target.vertices[i].array() + 0.5).matrix();
    }
    TriangleMesh init = target;
    init.colors.assign(init.colors.size(), kDefaultGray);
    const auto views = self_views(target, 6, 32);

    FitConfig cfg;
    cfg.iterations = 1000;
    cfg.seed = 3;
    const FitResult r = fit(init, views, cfg);
    ASSERT_EQ(r.history.size(), 1000u);

    std::vector<double> window_means;
    const int window = 250;
    for (int w = 0; w < 4; ++w) {
        double s = 0.0;
        for (int i = w * window; i < (w + 1) * window; ++i) {
            s += r.history[i].loss.total;
        }
        window_means.push_back(s / window);
    }
    for (std::size_t w = 1; w < window_means.size(); ++w) {
        EXPECT_LE(window_means[w], window_means[w - 1]) << "window " << w;
    }

    double initial_color = 0.0;
    double final_color = 0.0;
    for (const auto &v : views) {
        const ViewTarget *t = &v.target;
        const std::span<const Camera> cam(&v.camera, 1);
        initial_color += total_loss(init, build_topology(init), cam, std::span(&t, 1), {}, {}).report.color;
        final_color += total_loss(r.mesh, build_topology(r.mesh), cam, std::span(&t, 1), {}, {}).report.color;
    }
    EXPECT_LT(final_color, initial_color / 10.0);
}

TEST(Fit, HistoryCheckpointsAndDeterminism) {
    ScratchDir dir;
    const TriangleMesh target = oracle::toy_cube(2);
    const auto views = self_views(target, 4, 24);
    FitConfig cfg;
    cfg.iterations = 30;
    cfg.batch_size = 2;
    cfg.position.lr = 5e-3;
    cfg.seed = 11;
    cfg.checkpoint_every = 10;
    cfg.checkpoint_dir = dir / "ckpt";
    cfg.config_snapshot = "iterations = 30\n";
    cfg.cd_every = 15;
    cfg.cd_samples = 2000;
    const TriangleMesh init = make_icosphere(80);
    const FitResult a = fit(init, views, cfg, &target);
    ASSERT_EQ(a.history.size(), 30u);
    for (const auto &row : a.history) {
        EXPECT_TRUE(std::isfinite(row.loss.total));
        EXPECT_EQ(std::isnan(row.chamfer), row.iteration != 14 && row.iteration != 29);
    }
    EXPECT_DOUBLE_EQ(a.history.front().lr, 5e-3);
    EXPECT_DOUBLE_EQ(a.history.back().lr, 5e-4);
    for (const char *name : {"ckpt_000010", "ckpt_000020", "ckpt_000030"}) {
        for (const char *ext : {".ply", ".state", ".cfg"}) {
            EXPECT_TRUE(std::filesystem::exists(dir / "ckpt" / (std::string(name) + ext))) << name << ext;
        }
    }
    EXPECT_EQ(gmr::testing::read_file(dir / "ckpt" / "ckpt_000010.cfg"), "iterations = 30\n");

    const FitResult b = fit(init, views, cfg, &target);
    EXPECT_EQ(a.mesh.vertices, b.mesh.vertices);
    EXPECT_EQ(a.mesh.colors, b.mesh.colors);

    cfg.seed = 12;
    const FitResult c = fit(init, views, cfg, &target);
    EXPECT_NE(a.mesh.vertices, c.mesh.vertices);

    write_history_csv(a.history, dir / "h.csv");
    const std::string csv = gmr::testing::read_file(dir / "h.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,total,color,silhouette,edge,laplacian,lr,wall_seconds,chamfer");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
}

TEST(Fit, CallbackCanStopEarly) {
    const TriangleMesh m = make_icosphere(80);
    const auto views = self_views(m, 2, 16);
    FitConfig cfg;
    cfg.iterations = 100;
    const FitResult r = fit(m, views, cfg, nullptr, [](const HistoryRow &row, const TriangleMesh &) {
        return row.iteration < 4;
    });
    EXPECT_EQ(r.history.size(), 5u);
}

TEST(Fit, FailureNamesTheIteration) {
    const TriangleMesh m = make_icosphere(80);
    auto views = self_views(m, 2, 16);
    views[1].target.rgb = Image(8, 8, 3);
    FitConfig cfg;
    cfg.iterations = 10;
    try {
        fit(m, views, cfg);
        FAIL() << "expected failure";
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("fit failed at iteration"), std::string::npos) << e.what();
    }
}

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gmr::oracle {

McMoments monte_carlo_triangle(const Vec2 &a, const Vec2 &b, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vec2> pts(n);
    Vec2 sum = Vec2::Zero();
    for (auto &p : pts) {
        double u = unit(rng);
        double v = unit(rng);
        // Fold the unit square onto the triangle u + v <= 1.
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        p = u * a + v * b;
        sum += p;
    }
    McMoments out;
    out.mean = sum / static_cast<double>(n);
    Mat2 acc = Mat2::Zero();
    for (const auto &p : pts) {
        const Vec2 d = p - out.mean;
        acc += d * d.transpose();
    }
    out.cov = acc / static_cast<double>(n);
    Mat2 sq = Mat2::Zero();
    for (const auto &p : pts) {
        const Vec2 d = p - out.mean;
        const Mat2 prod = d * d.transpose() - out.cov;
        sq += prod.cwiseAbs2();
    }
    out.cov_stderr = (sq / static_cast<double>(n - 1)).cwiseSqrt() / std::sqrt(static_cast<double>(n));
    return out;
}

std::vector<double> central_gradient(const std::function<double(const std::vector<double> &)> &f,
                                     std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = f(x);
        x[i] = keep - h;
        const double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double relative_error(const std::vector<double> &a, const std::vector<double> &b, double floor) {
    double diff = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

RenderOutput brute_force_composite(const std::vector<Splat2D> &splats, const Camera &camera,
                                   const Vec3 &background) {
    const int w = camera.width;
    const int h = camera.height;
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (splats[a].depth != splats[b].depth) {
            return splats[a].depth < splats[b].depth;
        }
        if (splats[a].source != splats[b].source) {
            return splats[a].source < splats[b].source;
        }
        return a < b;
    });
    RenderOutput out;
    out.rgb = Image(w, h, 3);
    out.alpha = Image(w, h, 1);
    out.background = background;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int tx = x / 16;
            const int ty = y / 16;
            double t = 1.0;
            Vec3 c = Vec3::Zero();
            for (int i : order) {
                const Splat2D &s = splats[i];
                if (!(s.depth > 0.0)) {
                    continue;
                }
                // 3-sigma extent in pixel-center coordinates.
                const double rx = 3.0 * std::sqrt(s.cov(0, 0));
                const double ry = 3.0 * std::sqrt(s.cov(1, 1));
                const int x0 = std::clamp(static_cast<int>(std::ceil(s.mean.x() - rx - 0.5)), 0, w);
                const int x1 = std::clamp(static_cast<int>(std::floor(s.mean.x() + rx - 0.5)) + 1, 0, w);
                const int y0 = std::clamp(static_cast<int>(std::ceil(s.mean.y() - ry - 0.5)), 0, h);
                const int y1 = std::clamp(static_cast<int>(std::floor(s.mean.y() + ry - 0.5)) + 1, 0, h);
                if (x0 >= x1 || y0 >= y1) {
                    continue;
                }
                if (tx < x0 / 16 || tx > (x1 - 1) / 16 || ty < y0 / 16 || ty > (y1 - 1) / 16) {
                    continue;
                }
                const Vec2 d(x + 0.5 - s.mean.x(), y + 0.5 - s.mean.y());
                const double power = -0.5 * d.dot(s.cov.inverse() * d);
                if (power > 0.0) {
                    continue;
                }
                const double a = std::min(0.99, s.opacity * std::exp(power));
                if (a < 1.0 / 255.0) {
                    continue;
                }
                if (t * (1.0 - a) < 1e-4) {
                    break;
                }
                c += s.color * a * t;
                t *= 1.0 - a;
            }
            for (int ch = 0; ch < 3; ++ch) {
                out.rgb.at(x, y, ch) = c[ch] + t * background[ch];
            }
            out.alpha.at(x, y) = 1.0 - t;
        }
    }
    return out;
}

double brute_force_chamfer(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    auto one_way = [](const std::vector<Vec3> &from, const std::vector<Vec3> &to) {
        double sum = 0.0;
        for (const Vec3 &p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3 &q : to) {
                best = std::min(best, (p - q).squaredNorm());
            }
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    return 0.5 * (one_way(a, b) + one_way(b, a));
}

Mat3 random_rotation(std::mt19937_64 &rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat3 m;
    for (int i = 0; i < 9; ++i) {
        m(i / 3, i % 3) = g(rng);
    }
    Eigen::HouseholderQR<Mat3> qr(m);
    Mat3 q = qr.householderQ();
    const Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < 3; ++i) {
        if (r(i, i) < 0.0) {
            q.col(i) = -q.col(i);
        }
    }
    if (q.determinant() < 0.0) {
        q.col(0) = -q.col(0);
    }
    return q;
}

TriangleMesh octahedron(double radius) {
    TriangleMesh m;
    m.vertices = {{radius, 0, 0}, {-radius, 0, 0}, {0, radius, 0}, {0, -radius, 0}, {0, 0, radius}, {0, 0, -radius}};
    m.facets = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
    m.colors.assign(m.vertices.size(), kDefaultGray);
    return m;
}

TriangleMesh icosahedron() { return make_icosphere(20, 1.0); }

TriangleMesh toy_cube(int subdivisions) {
    TriangleMesh m = normalize_mesh(make_grid_cube(subdivisions, 1.0)).first;
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        m.colors[i] = (0.5 * m.vertices[i].array() + 0.5).matrix();
    }
    return m;
}

Image pattern_image(int width, int height, int channels, int variant) {
    Image img(width, height, channels);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                img.at(x, y, c) = 0.5 + 0.3 * std::sin(0.21 * x * (1.0 + 0.1 * variant) + 0.13 * y + 0.9 * c + variant) +
                                  0.15 * std::cos(0.007 * x * y + 0.5 * variant + c);
            }
        }
    }
    return img;
}

} // namespace gmr::oracle

#include "gmr/render.hpp"

#include "gmr/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gmr {

PixelRect splat_pixel_rect(const Vec2 &mean, const Mat2 &cov, int width, int height) {
    const double rx = kSigmaExtent * std::sqrt(std::max(cov(0, 0), 0.0));
    const double ry = kSigmaExtent * std::sqrt(std::max(cov(1, 1), 0.0));
    // Pixel x is inside when its center x + 0.5 lies in [mx - rx, mx + rx].
    auto lo = [](double v, int limit) {
        return static_cast<int>(std::clamp(std::ceil(v - 0.5), 0.0, static_cast<double>(limit)));
    };
    auto hi = [](double v, int limit) {
        return static_cast<int>(std::clamp(std::floor(v - 0.5) + 1.0, 0.0, static_cast<double>(limit)));
    };
    PixelRect r;
    r.x0 = lo(mean.x() - rx, width);
    r.x1 = hi(mean.x() + rx, width);
    r.y0 = lo(mean.y() - ry, height);
    r.y1 = hi(mean.y() + ry, height);
    return r;
}

namespace {

struct Projection {
    Vec3 t;
    Eigen::Matrix<double, 2, 3> jacobian;
};

Projection projection_at(const FacetGaussian &g, const Camera &camera) {
    Projection p;
    p.t = camera.to_camera(g.mean);
    const double z = p.t.z();
    p.jacobian << camera.fx / z, 0.0, -camera.fx * p.t.x() / (z * z), 0.0, camera.fy / z,
        -camera.fy * p.t.y() / (z * z);
    return p;
}

} // namespace

std::optional<Splat2D> project_gaussian(const FacetGaussian &gaussian, const Camera &camera) {
    const Projection p = projection_at(gaussian, camera);
    const double z = p.t.z();
    if (!(z > camera.near_plane && z < camera.far_plane)) {
        return std::nullopt;
    }
    const Eigen::Matrix<double, 2, 3> jw = p.jacobian * camera.rotation;

    Splat2D s;
    s.mean = {camera.fx * p.t.x() / z + camera.cx, camera.fy * p.t.y() / z + camera.cy};
    s.cov = jw * gaussian.cov3d * jw.transpose();
    s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
    s.cov += kLowPassDilation * Mat2::Identity();
    s.depth = z;
    s.color = gaussian.color_dc;
    s.opacity = gaussian.opacity;
    s.source = gaussian.source_facet;
    if (splat_pixel_rect(s.mean, s.cov, camera.width, camera.height).empty()) {
        return std::nullopt;
    }
    return s;
}

ProjectGradients project_backward(const FacetGaussian &gaussian, const Camera &camera,
                                  const Vec2 &grad_mean2d, const Mat2 &grad_cov2d) {
    const Projection p = projection_at(gaussian, camera);
    const double x = p.t.x();
    const double y = p.t.y();
    const double z = p.t.z();
    const Mat3 &w = camera.rotation;
    const Eigen::Matrix<double, 2, 3> jw = p.jacobian * w;

    ProjectGradients out;
    // The forward pass symmetrizes the off-diagonal, so only sym(G) reaches Sigma.
    const Mat2 g_sym = 0.5 * (grad_cov2d + grad_cov2d.transpose());
    // Sigma_2d = (J W) Sigma (J W)^T.
    out.cov = jw.transpose() * g_sym * jw;

    // Through J: dL/dJ = 2 G J V with V = W Sigma W^T (G symmetric).
    const Mat3 v = w * gaussian.cov3d * w.transpose();
    const Eigen::Matrix<double, 2, 3> gj = 2.0 * g_sym * p.jacobian * v;
    const double z2 = z * z;
    const double z3 = z2 * z;
    Vec3 gt = Vec3::Zero();
    gt.x() += gj(0, 2) * (-camera.fx / z2);
    gt.y() += gj(1, 2) * (-camera.fy / z2);
    gt.z() += gj(0, 0) * (-camera.fx / z2) + gj(0, 2) * (2.0 * camera.fx * x / z3) +
              gj(1, 1) * (-camera.fy / z2) + gj(1, 2) * (2.0 * camera.fy * y / z3);

    // Through the projected mean.
    gt.x() += grad_mean2d.x() * camera.fx / z;
    gt.y() += grad_mean2d.y() * camera.fy / z;
    gt.z() += -grad_mean2d.x() * camera.fx * x / z2 - grad_mean2d.y() * camera.fy * y / z2;

    out.mean = w.transpose() * gt;
    return out;
}

namespace {

void check_finite(std::span<const Splat2D> splats) {
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const Splat2D &s = splats[i];
        if (!s.mean.allFinite() || !s.cov.allFinite() || !s.color.allFinite() || !std::isfinite(s.depth) ||
            !std::isfinite(s.opacity)) {
            throw NonFiniteError("splat " + std::to_string(i) + " (source " + std::to_string(s.source) +
                                 ") has non-finite parameters");
        }
    }
}

/// Opacity-weighted Gaussian falloff of one splat at one pixel.
struct Sample {
    Vec2 d;
    double falloff = 0.0;
    double raw_alpha = 0.0;
    double alpha = 0.0;
    bool skipped = true;
};

Sample evaluate(const Splat2D &s, const Mat2 &conic, double px, double py) {
    Sample out;
    out.d = {px - s.mean.x(), py - s.mean.y()};
    const double power = -0.5 * out.d.dot(conic * out.d);
    if (power > 0.0) {
        return out;
    }
    out.falloff = std::exp(power);
    out.raw_alpha = s.opacity * out.falloff;
    out.alpha = std::min(kAlphaMax, out.raw_alpha);
    out.skipped = out.alpha < kAlphaMin;
    return out;
}

void build_tiles(std::span<const Splat2D> splats, const Camera &camera, RasterTrace &trace) {
    trace.tiles_x = (camera.width + kTileSize - 1) / kTileSize;
    trace.tiles_y = (camera.height + kTileSize - 1) / kTileSize;
    trace.tile_splats.assign(static_cast<std::size_t>(trace.tiles_x) * trace.tiles_y, {});
    trace.rects.resize(splats.size());
    trace.conics.resize(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const Splat2D &s = splats[i];
        trace.conics[i] = s.cov.inverse();
        const PixelRect r = splat_pixel_rect(s.mean, s.cov, camera.width, camera.height);
        trace.rects[i] = r;
        if (r.empty() || !(s.depth > 0.0)) {
            continue;
        }
        for (int ty = r.y0 / kTileSize; ty <= (r.y1 - 1) / kTileSize; ++ty) {
            for (int tx = r.x0 / kTileSize; tx <= (r.x1 - 1) / kTileSize; ++tx) {
                trace.tile_splats[static_cast<std::size_t>(ty) * trace.tiles_x + tx].push_back(
                    static_cast<int>(i));
            }
        }
    }
    for (auto &list : trace.tile_splats) {
        std::sort(list.begin(), list.end(), [&](int a, int b) {
            if (splats[a].depth != splats[b].depth) {
                return splats[a].depth < splats[b].depth;
            }
            if (splats[a].source != splats[b].source) {
                return splats[a].source < splats[b].source;
            }
            return a < b;
        });
    }
}

} // namespace

RenderOutput rasterize(std::span<const Splat2D> splats, const Camera &camera, const Vec3 &background,
                       RasterTrace *trace) {
    check_finite(splats);
    RasterTrace local;
    RasterTrace &tr = trace ? *trace : local;
    build_tiles(splats, camera, tr);

    const int w = camera.width;
    const int h = camera.height;
    RenderOutput out;
    out.rgb = Image(w, h, 3);
    out.alpha = Image(w, h, 1);
    out.background = background;
    tr.final_transmittance.assign(static_cast<std::size_t>(w) * h, 1.0);
    tr.walked.assign(static_cast<std::size_t>(w) * h, 0);

    const long tile_count = static_cast<long>(tr.tile_splats.size());
#pragma omp parallel for schedule(dynamic)
    for (long tile = 0; tile < tile_count; ++tile) {
        const auto &list = tr.tile_splats[tile];
        const int tx = static_cast<int>(tile % tr.tiles_x);
        const int ty = static_cast<int>(tile / tr.tiles_x);
        const int x_end = std::min(w, (tx + 1) * kTileSize);
        const int y_end = std::min(h, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y_end; ++y) {
            for (int x = tx * kTileSize; x < x_end; ++x) {
                double transmittance = 1.0;
                Vec3 color = Vec3::Zero();
                int walked = 0;
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const int idx = list[k];
                    const Sample smp = evaluate(splats[idx], tr.conics[idx], x + 0.5, y + 0.5);
                    if (smp.skipped) {
                        continue;
                    }
                    const double next = transmittance * (1.0 - smp.alpha);
                    if (next < kTransmittanceStop) {
                        break;
                    }
                    color += splats[idx].color * (smp.alpha * transmittance);
                    transmittance = next;
                    walked = static_cast<int>(k) + 1;
                }
                const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                tr.final_transmittance[pix] = transmittance;
                tr.walked[pix] = walked;
                for (int c = 0; c < 3; ++c) {
                    out.rgb.at(x, y, c) = color[c] + transmittance * background[c];
                }
                out.alpha.at(x, y) = 1.0 - transmittance;
            }
        }
    }
    return out;
}

SplatGradients rasterize_backward(std::span<const Splat2D> splats, const Camera &camera,
                                  const RenderOutput &output, const Image &grad_rgb,
                                  const Image &grad_alpha, const RasterTrace *trace) {
    const int w = camera.width;
    const int h = camera.height;
    if (grad_rgb.width() != w || grad_rgb.height() != h || grad_rgb.channels() != 3 ||
        grad_alpha.width() != w || grad_alpha.height() != h || grad_alpha.channels() != 1) {
        throw ShapeError("rasterize_backward: gradient images must be " + std::to_string(w) + "x" +
                         std::to_string(h) + " with 3 and 1 channels");
    }
    RasterTrace recomputed;
    if (!trace) {
        rasterize(splats, camera, output.background, &recomputed);
        trace = &recomputed;
    }
    const RasterTrace &tr = *trace;
    const Vec3 &bg = output.background;

    // Per tile, one slot per tile-list entry, reduced afterwards in a fixed order.
    struct Partial {
        Vec2 mean = Vec2::Zero();
        Mat2 conic = Mat2::Zero();
        Vec3 color = Vec3::Zero();
        double opacity = 0.0;
    };
    std::vector<std::vector<Partial>> partials(tr.tile_splats.size());

    const long tile_count = static_cast<long>(tr.tile_splats.size());
#pragma omp parallel for schedule(dynamic)
    for (long tile = 0; tile < tile_count; ++tile) {
        const auto &list = tr.tile_splats[tile];
        auto &acc = partials[tile];
        acc.assign(list.size(), Partial{});
        const int tx = static_cast<int>(tile % tr.tiles_x);
        const int ty = static_cast<int>(tile / tr.tiles_x);
        const int x_end = std::min(w, (tx + 1) * kTileSize);
        const int y_end = std::min(h, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y_end; ++y) {
            for (int x = tx * kTileSize; x < x_end; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                const Vec3 g_rgb(grad_rgb.at(x, y, 0), grad_rgb.at(x, y, 1), grad_rgb.at(x, y, 2));
                const double g_alpha = grad_alpha.at(x, y);
                if (g_rgb.isZero(0.0) && g_alpha == 0.0) {
                    continue;
                }
                const double t_final = tr.final_transmittance[pix];
                const double bg_term = g_rgb.dot(bg) * t_final;
                double transmittance = t_final;
                // Sum over later splats of g . c_j a_j T_j.
                double behind = 0.0;
                for (int k = tr.walked[pix] - 1; k >= 0; --k) {
                    const int idx = list[k];
                    const Splat2D &s = splats[idx];
                    const Sample smp = evaluate(s, tr.conics[idx], x + 0.5, y + 0.5);
                    if (smp.skipped) {
                        continue;
                    }
                    const double one_minus = 1.0 - smp.alpha;
                    transmittance /= one_minus;
                    const double weight = smp.alpha * transmittance;
                    const double g_color_dot = g_rgb.dot(s.color);

                    Partial &p = acc[k];
                    p.color += g_rgb * weight;
                    const double d_alpha = g_color_dot * transmittance - (behind + bg_term) / one_minus +
                                           g_alpha * t_final / one_minus;
                    behind += g_color_dot * weight;

                    if (smp.raw_alpha > kAlphaMax) {
                        continue;
                    }
                    p.opacity += d_alpha * smp.falloff;
                    const double d_power = d_alpha * s.opacity * smp.falloff;
                    p.mean += d_power * (tr.conics[idx] * smp.d);
                    p.conic += (-0.5 * d_power) * (smp.d * smp.d.transpose());
                }
            }
        }
    }

    SplatGradients out;
    out.mean.assign(splats.size(), Vec2::Zero());
    out.color.assign(splats.size(), Vec3::Zero());
    out.opacity.assign(splats.size(), 0.0);
    std::vector<Mat2> conic_grad(splats.size(), Mat2::Zero());
    for (std::size_t tile = 0; tile < partials.size(); ++tile) {
        const auto &list = tr.tile_splats[tile];
        for (std::size_t k = 0; k < partials[tile].size(); ++k) {
            const int idx = list[k];
            const Partial &p = partials[tile][k];
            out.mean[idx] += p.mean;
            out.color[idx] += p.color;
            out.opacity[idx] += p.opacity;
            conic_grad[idx] += p.conic;
        }
    }
    out.cov.resize(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
        // conic = cov^-1  =>  dL/dcov = -conic dL/dconic conic.
        const Mat2 &q = tr.conics[i];
        out.cov[i] = -q * conic_grad[i] * q;
    }
    return out;
}

std::vector<bool> discontinuity_mask(std::span<const Splat2D> splats, const Camera &camera,
                                     const RasterTrace &trace, double relative_margin,
                                     double pixel_margin) {
    const int w = camera.width;
    const int h = camera.height;
    std::vector<bool> mask(static_cast<std::size_t>(w) * h, false);
    auto near = [&](double value, double threshold) {
        return std::abs(value - threshold) <= relative_margin * threshold;
    };

    for (std::size_t tile = 0; tile < trace.tile_splats.size(); ++tile) {
        const auto &list = trace.tile_splats[tile];
        const int tx = static_cast<int>(tile % trace.tiles_x);
        const int ty = static_cast<int>(tile / trace.tiles_x);
        for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
            for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
                double transmittance = 1.0;
                bool flag = false;
                for (const int idx : list) {
                    const Sample smp = evaluate(splats[idx], trace.conics[idx], x + 0.5, y + 0.5);
                    if (near(smp.raw_alpha, kAlphaMax) || near(smp.alpha, kAlphaMin)) {
                        flag = true;
                    }
                    if (smp.skipped) {
                        continue;
                    }
                    const double next = transmittance * (1.0 - smp.alpha);
                    if (near(next, kTransmittanceStop)) {
                        flag = true;
                    }
                    if (next < kTransmittanceStop) {
                        break;
                    }
                    transmittance = next;
                }
                mask[static_cast<std::size_t>(y) * w + x] = flag;
            }
        }
    }

    // A box edge close to a tile or image boundary can add or drop a whole
    // tile under a small perturbation.
    for (const Splat2D &s : splats) {
        const double rx = kSigmaExtent * std::sqrt(std::max(s.cov(0, 0), 0.0));
        const double ry = kSigmaExtent * std::sqrt(std::max(s.cov(1, 1), 0.0));
        const Vec2 grow(rx + pixel_margin, ry + pixel_margin);
        const Vec2 shrink(std::max(rx - pixel_margin, 0.0), std::max(ry - pixel_margin, 0.0));
        auto rect_for = [&](const Vec2 &r) {
            Mat2 c = Mat2::Zero();
            c(0, 0) = (r.x() / kSigmaExtent) * (r.x() / kSigmaExtent);
            c(1, 1) = (r.y() / kSigmaExtent) * (r.y() / kSigmaExtent);
            return splat_pixel_rect(s.mean, c, w, h);
        };
        const PixelRect outer = rect_for(grow);
        const PixelRect inner = rect_for(shrink);
        auto tiles = [](const PixelRect &r) {
            if (r.empty()) {
                return std::array<int, 4>{0, 0, -1, -1};
            }
            return std::array<int, 4>{r.x0 / kTileSize, r.y0 / kTileSize, (r.x1 - 1) / kTileSize,
                                      (r.y1 - 1) / kTileSize};
        };
        const auto to = tiles(outer);
        const auto ti = tiles(inner);
        if (to == ti) {
            continue;
        }
        for (int ty = to[1]; ty <= to[3]; ++ty) {
            for (int tx = to[0]; tx <= to[2]; ++tx) {
                const bool stable = tx >= ti[0] && tx <= ti[2] && ty >= ti[1] && ty <= ti[3];
                if (stable) {
                    continue;
                }
                for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
                    for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
                        mask[static_cast<std::size_t>(y) * w + x] = true;
                    }
                }
            }
        }
    }
    return mask;
}

MeshRenderTrace render_mesh_traced(const TriangleMesh &mesh, const Camera &camera,
                                   const RenderOptions &options) {
    MeshRenderTrace trace;
    trace.gaussians = convert_mesh(mesh, options.convert);
    trace.splats.reserve(trace.gaussians.size());
    for (const auto &g : trace.gaussians) {
        if (auto s = project_gaussian(g, camera)) {
            trace.splats.push_back(*s);
        }
    }
    trace.output = rasterize(trace.splats, camera, options.background, &trace.raster);
    return trace;
}

RenderOutput render_mesh(const TriangleMesh &mesh, const Camera &camera, const RenderOptions &options) {
    return render_mesh_traced(mesh, camera, options).output;
}

ConvertGradients render_mesh_backward(const TriangleMesh &mesh, const Camera &camera,
                                      const RenderOptions &options, const MeshRenderTrace &trace,
                                      const Image &grad_rgb, const Image &grad_alpha) {
    if (options.convert.path != CovariancePath::Embed) {
        throw ConfigError("render_mesh_backward requires the embed covariance path");
    }
    const SplatGradients sg =
        rasterize_backward(trace.splats, camera, trace.output, grad_rgb, grad_alpha, &trace.raster);

    const std::size_t nf = trace.gaussians.size();
    std::vector<Vec3> grad_means(nf, Vec3::Zero());
    std::vector<Mat3> grad_covs(nf, Mat3::Zero());
    std::vector<Vec3> grad_colors(nf, Vec3::Zero());
    for (std::size_t i = 0; i < trace.splats.size(); ++i) {
        const int f = trace.splats[i].source;
        const ProjectGradients pg = project_backward(trace.gaussians[f], camera, sg.mean[i], sg.cov[i]);
        grad_means[f] += pg.mean;
        grad_covs[f] += pg.cov;
        grad_colors[f] += sg.color[i];
    }
    return convert_backward(mesh, trace.gaussians, grad_means, grad_covs, grad_colors,
                            options.convert.rescale);
}

} // namespace gmr

#include "gmr/objective.hpp"

#include "gmr/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

namespace gmr {

void LossWeights::validate() const {
    for (double w : {color, silhouette, edge, laplacian}) {
        if (!std::isfinite(w) || w < 0.0) {
            throw ConfigError("loss weights must be finite and non-negative");
        }
    }
}

namespace {

void require_same_shape(const Image &a, const Image &b, const char *what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
                         std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                         std::to_string(b.channels()) + ")");
    }
}

} // namespace

ImageLoss color_loss(const Image &rendered, const Image &target) {
    require_same_shape(rendered, target, "color_loss");
    ImageLoss out;
    out.grad = Image(rendered.width(), rendered.height(), rendered.channels());
    const auto &r = rendered.data();
    const auto &t = target.data();
    auto &g = out.grad.data();
    const double n = static_cast<double>(r.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r[i] - t[i];
        sum += d * d;
        g[i] = 2.0 * d / n;
    }
    out.value = r.empty() ? 0.0 : sum / n;
    return out;
}

ImageLoss silhouette_loss(const Image &alpha, const Image &mask) {
    require_same_shape(alpha, mask, "silhouette_loss");
    ImageLoss out;
    out.grad = Image(alpha.width(), alpha.height(), alpha.channels());
    const auto &a = alpha.data();
    const auto &m = mask.data();
    auto &g = out.grad.data();
    const double n = static_cast<double>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double p = std::clamp(a[i], kBceClamp, 1.0 - kBceClamp);
        sum += -(m[i] * std::log(p) + (1.0 - m[i]) * std::log(1.0 - p));
        const bool clamped = a[i] < kBceClamp || a[i] > 1.0 - kBceClamp;
        g[i] = clamped ? 0.0 : (-(m[i] / p) + (1.0 - m[i]) / (1.0 - p)) / n;
    }
    out.value = a.empty() ? 0.0 : sum / n;
    return out;
}

VertexLoss edge_length_loss(const TriangleMesh &mesh, const Topology &topology) {
    VertexLoss out;
    out.grad.assign(mesh.vertices.size(), Vec3::Zero());
    const auto &edges = topology.edges;
    if (edges.empty()) {
        return out;
    }
    std::vector<double> lengths(edges.size());
    double mean = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        lengths[e] = (mesh.vertices[edges[e].second] - mesh.vertices[edges[e].first]).norm();
        mean += lengths[e];
    }
    const double n = static_cast<double>(edges.size());
    mean /= n;

    double sum = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const double dev = lengths[e] - mean;
        sum += dev * dev;
        if (lengths[e] > 0.0) {
            const auto [a, b] = edges[e];
            const Vec3 dir = (mesh.vertices[b] - mesh.vertices[a]) / lengths[e];
            const Vec3 g = (2.0 * dev / n) * dir;
            out.grad[b] += g;
            out.grad[a] -= g;
        }
    }
    out.value = sum / n;
    return out;
}

VertexLoss laplacian_loss(const TriangleMesh &mesh, const Topology &topology) {
    VertexLoss out;
    const std::size_t nv = mesh.vertices.size();
    out.grad.assign(nv, Vec3::Zero());
    if (nv == 0) {
        return out;
    }
    const double n = static_cast<double>(nv);
    double sum = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
        const auto &nbrs = topology.adjacency[v];
        if (nbrs.empty()) {
            continue;
        }
        Vec3 avg = Vec3::Zero();
        for (int u : nbrs) {
            avg += mesh.vertices[u];
        }
        avg /= static_cast<double>(nbrs.size());
        const Vec3 delta = mesh.vertices[v] - avg;
        sum += delta.squaredNorm();
        const Vec3 g = 2.0 * delta / n;
        out.grad[v] += g;
        const Vec3 share = g / static_cast<double>(nbrs.size());
        for (int u : nbrs) {
            out.grad[u] -= share;
        }
    }
    out.value = sum / n;
    return out;
}

LossResult total_loss(const TriangleMesh &mesh, const Topology &topology, std::span<const Camera> cameras,
                      std::span<const ViewTarget *const> targets, const LossWeights &weights,
                      const RenderOptions &render_options) {
    if (cameras.empty()) {
        throw ShapeError("total_loss needs at least one view");
    }
    if (cameras.size() != targets.size()) {
        throw ShapeError("total_loss: " + std::to_string(cameras.size()) + " cameras but " +
                         std::to_string(targets.size()) + " targets");
    }
    weights.validate();

    const std::size_t nv = mesh.vertices.size();
    const std::size_t batch = cameras.size();
    LossResult result;
    result.grad_vertices.assign(nv, Vec3::Zero());
    result.grad_colors.assign(nv, Vec3::Zero());
    LossReport &report = result.report;
    report.view_color.assign(batch, 0.0);
    report.view_silhouette.assign(batch, 0.0);

    const bool image_terms = weights.color > 0.0 || weights.silhouette > 0.0;
    if (image_terms) {
        std::vector<ConvertGradients> per_view(batch);
        std::exception_ptr failure;
        const long nb = static_cast<long>(batch);
#pragma omp parallel for schedule(dynamic)
        for (long b = 0; b < nb; ++b) {
            try {
                const Camera &cam = cameras[b];
                const ViewTarget &target = *targets[b];
                const MeshRenderTrace trace = render_mesh_traced(mesh, cam, render_options);
                const double scale = 1.0 / static_cast<double>(batch);

                Image grad_rgb(cam.width, cam.height, 3);
                Image grad_alpha(cam.width, cam.height, 1);
                if (weights.color > 0.0) {
                    ImageLoss c = color_loss(trace.output.rgb, target.rgb);
                    report.view_color[b] = c.value;
                    for (std::size_t i = 0; i < c.grad.size(); ++i) {
                        grad_rgb.data()[i] = weights.color * scale * c.grad.data()[i];
                    }
                }
                if (weights.silhouette > 0.0) {
                    ImageLoss s = silhouette_loss(trace.output.alpha, target.mask);
                    report.view_silhouette[b] = s.value;
                    for (std::size_t i = 0; i < s.grad.size(); ++i) {
                        grad_alpha.data()[i] = weights.silhouette * scale * s.grad.data()[i];
                    }
                }
                per_view[b] = render_mesh_backward(mesh, cam, render_options, trace, grad_rgb, grad_alpha);
            } catch (...) {
#pragma omp critical(gmr_total_loss_failure)
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
        for (std::size_t b = 0; b < batch; ++b) {
            report.color += report.view_color[b];
            report.silhouette += report.view_silhouette[b];
            for (std::size_t v = 0; v < nv; ++v) {
                result.grad_vertices[v] += per_view[b].vertices[v];
                result.grad_colors[v] += per_view[b].colors[v];
            }
        }
        report.color /= static_cast<double>(batch);
        report.silhouette /= static_cast<double>(batch);
    }

    if (weights.edge > 0.0) {
        const VertexLoss e = edge_length_loss(mesh, topology);
        report.edge = e.value;
        for (std::size_t v = 0; v < nv; ++v) {
            result.grad_vertices[v] += weights.edge * e.grad[v];
        }
    }
    if (weights.laplacian > 0.0) {
        const VertexLoss l = laplacian_loss(mesh, topology);
        report.laplacian = l.value;
        for (std::size_t v = 0; v < nv; ++v) {
            result.grad_vertices[v] += weights.laplacian * l.grad[v];
        }
    }
    report.total = weights.color * report.color + weights.silhouette * report.silhouette +
                   weights.edge * report.edge + weights.laplacian * report.laplacian;
    return result;
}

} // namespace gmr

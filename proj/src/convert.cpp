#include "gmr/convert.hpp"

#include "gmr/error.hpp"
#include "gmr/ply.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gmr {

Mat3 FacetFrame::rotation() const {
    Mat3 r;
    r.col(0) = x_axis;
    r.col(1) = y_axis;
    r.col(2) = normal;
    return r;
}

namespace {

Vec3 any_orthogonal_unit(const Vec3 &axis) {
    const Vec3 seed = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    return (seed - seed.dot(axis) * axis).normalized();
}

} // namespace

FacetFrame build_facet_frame(const Vec3 &vi, const Vec3 &vj, const Vec3 &vk) {
    FacetFrame frame;
    frame.origin = vi;
    const Vec3 e1 = vj - vi;
    const Vec3 e2 = vk - vi;

    const double l1 = e1.norm();
    if (l1 >= kFrameTolerance) {
        frame.x_axis = e1 / l1;
    } else {
        frame.degenerate = true;
        // Keep the surviving edge inside the frame so the moments still
        // describe the segment.
        const double l2 = e2.norm();
        frame.x_axis = l2 >= kFrameTolerance ? Vec3(e2 / l2) : Vec3(Vec3::UnitX());
    }

    const Vec3 perp = e2 - e2.dot(frame.x_axis) * frame.x_axis;
    const double lp = perp.norm();
    if (!frame.degenerate && lp >= kFrameTolerance) {
        frame.y_axis = perp / lp;
    } else {
        frame.degenerate = true;
        frame.y_axis = any_orthogonal_unit(frame.x_axis);
    }
    frame.normal = frame.x_axis.cross(frame.y_axis);

    frame.vj_2d = {e1.dot(frame.x_axis), 0.0};
    frame.vk_2d = {e2.dot(frame.x_axis), e2.dot(frame.y_axis)};
    return frame;
}

Moments2D triangle_moments(const FacetFrame &frame) {
    const double xj = frame.vj_2d.x();
    const double yj = frame.vj_2d.y();
    const double xk = frame.vk_2d.x();
    const double yk = frame.vk_2d.y();

    Moments2D m;
    m.mu = {(xj + xk) / 3.0, (yj + yk) / 3.0};

    // p(a, b) = a * vj + b * vk over the unit simplex, with
    // E[a] = E[b] = 1/3, E[a^2] = E[b^2] = 1/6, E[ab] = 1/12.
    const double exx = (xj * xj + xj * xk + xk * xk) / 6.0;
    const double exy = (2.0 * xj * yj + xj * yk + xk * yj + 2.0 * xk * yk) / 12.0;
    const double eyy = (yj * yj + yj * yk + yk * yk) / 6.0;
    m.second_moments = {exx, exy, eyy};

    const double cxy = exy - m.mu.x() * m.mu.y();
    m.cov2d << exx - m.mu.x() * m.mu.x(), cxy, cxy, eyy - m.mu.y() * m.mu.y();
    m.area = 0.5 * std::abs(xj * yk - yj * xk);
    return m;
}

double area_match_factor(const Moments2D &moments) {
    const double det = moments.cov2d.determinant();
    return moments.area / (std::numbers::pi * std::sqrt(std::max(det, kKappaEpsilon)));
}

SymEigen2 sym_eigen2(const Mat2 &m) {
    const double a = m(0, 0);
    const double b = 0.5 * (m(0, 1) + m(1, 0));
    const double c = m(1, 1);
    const double mean = 0.5 * (a + c);
    const double half_diff = 0.5 * (a - c);
    const double r = std::hypot(half_diff, b);

    SymEigen2 out;
    out.values = {mean + r, mean - r};
    if (2.0 * r < 1e-12) {
        out.vectors.setIdentity();
        return out;
    }
    // Two candidate eigenvectors for lambda1; take the better conditioned.
    const Vec2 v1(b, out.values[0] - a);
    const Vec2 v2(out.values[0] - c, b);
    Vec2 u = v1.squaredNorm() >= v2.squaredNorm() ? v1 : v2;
    u.normalize();
    if (u.x() < 0.0 || (u.x() == 0.0 && u.y() < 0.0)) {
        u = -u;
    }
    out.vectors << u.x(), -u.y(), u.y(), u.x();
    return out;
}

namespace {

Mat3 in_plane_rotation(const FacetFrame &frame, const Mat2 &u) {
    Mat3 block = Mat3::Identity();
    block.topLeftCorner<2, 2>() = u;
    return frame.rotation() * block;
}

} // namespace

FacetGaussian lift_covariance_eigen(const Moments2D &moments, const FacetFrame &frame) {
    const SymEigen2 eig = sym_eigen2(moments.cov2d);
    const double l1 = std::max(eig.values[0], 0.0);
    const double l2 = std::max(eig.values[1], 0.0);
    const double kappa =
        moments.area / (std::numbers::pi * std::sqrt(std::max(l1 * l2, kKappaEpsilon)));

    FacetGaussian g;
    g.mean = frame.to_world(moments.mu);
    g.rotation = in_plane_rotation(frame, eig.vectors);
    g.scales = {std::sqrt(kappa * l1), std::sqrt(kappa * l2), kNormalScale};
    g.cov3d = g.rotation * g.scales.cwiseAbs2().asDiagonal() * g.rotation.transpose();
    return g;
}

FacetGaussian lift_covariance_embed(const Moments2D &moments, const FacetFrame &frame, bool rescale) {
    const double kappa = rescale ? area_match_factor(moments) : 1.0;
    const Mat2 in_plane = kappa * moments.cov2d;

    Mat3 block = Mat3::Zero();
    block.topLeftCorner<2, 2>() = in_plane;
    block(2, 2) = kNormalScale * kNormalScale;
    const Mat3 rf = frame.rotation();

    FacetGaussian g;
    g.mean = frame.to_world(moments.mu);
    g.cov3d = rf * block * rf.transpose();

    const SymEigen2 eig = sym_eigen2(in_plane);
    g.rotation = in_plane_rotation(frame, eig.vectors);
    g.scales = {std::sqrt(std::max(eig.values[0], 0.0)), std::sqrt(std::max(eig.values[1], 0.0)),
                kNormalScale};
    return g;
}

Vec3 facet_color(const Vec3 &ci, const Vec3 &cj, const Vec3 &ck) { return (ci + cj + ck) / 3.0; }

std::vector<FacetGaussian> convert_mesh(const TriangleMesh &mesh, const ConvertOptions &options) {
    std::vector<FacetGaussian> out(mesh.facets.size());
    const auto n = static_cast<long>(mesh.facets.size());
#pragma omp parallel for schedule(static)
    for (long f = 0; f < n; ++f) {
        const auto &t = mesh.facets[f];
        const Vec3 &vi = mesh.vertices[t[0]];
        const Vec3 &vj = mesh.vertices[t[1]];
        const Vec3 &vk = mesh.vertices[t[2]];
        const FacetFrame frame = build_facet_frame(vi, vj, vk);
        const Moments2D moments = triangle_moments(frame);
        FacetGaussian g = options.path == CovariancePath::Eigen
                              ? lift_covariance_eigen(moments, frame)
                              : lift_covariance_embed(moments, frame, options.rescale);
        g.mean = (vi + vj + vk) / 3.0;
        g.opacity = 1.0;
        g.color_dc = facet_color(mesh.colors[t[0]], mesh.colors[t[1]], mesh.colors[t[2]]);
        g.source_facet = static_cast<int>(f);
        out[f] = g;
    }
    return out;
}

ConvertGradients convert_backward(const TriangleMesh &mesh, std::span<const FacetGaussian> gaussians,
                                  std::span<const Vec3> grad_means, std::span<const Mat3> grad_cov3ds,
                                  std::span<const Vec3> grad_colors, bool rescale) {
    const std::size_t nf = mesh.facets.size();
    if (gaussians.size() != nf || grad_means.size() != nf || grad_cov3ds.size() != nf ||
        grad_colors.size() != nf) {
        throw ShapeError("convert_backward: expected " + std::to_string(nf) +
                         " entries per array, got gaussians=" + std::to_string(gaussians.size()) +
                         " means=" + std::to_string(grad_means.size()) +
                         " covs=" + std::to_string(grad_cov3ds.size()) +
                         " colors=" + std::to_string(grad_colors.size()));
    }

    ConvertGradients out;
    out.vertices.assign(mesh.vertices.size(), Vec3::Zero());
    out.colors.assign(mesh.vertices.size(), Vec3::Zero());

    // The embed-path covariance equals, for a frame spanning the triangle,
    //   Sigma = kappa / 36 * sum_{edges} e e^T + s_z^2 n n^T,
    // which is differentiated here directly in world coordinates.
    const double sz2 = kNormalScale * kNormalScale;
    for (std::size_t f = 0; f < nf; ++f) {
        const auto &t = mesh.facets[f];
        const Vec3 &vi = mesh.vertices[t[0]];
        const Vec3 &vj = mesh.vertices[t[1]];
        const Vec3 &vk = mesh.vertices[t[2]];

        const Vec3 gm = grad_means[f] / 3.0;
        const Vec3 gc = grad_colors[f] / 3.0;
        for (int k = 0; k < 3; ++k) {
            out.vertices[t[k]] += gm;
            out.colors[t[k]] += gc;
        }

        const Mat3 gs = grad_cov3ds[f] + grad_cov3ds[f].transpose();
        if (gs.isZero(0.0)) {
            continue;
        }

        const FacetFrame frame = build_facet_frame(vi, vj, vk);
        const Moments2D moments = triangle_moments(frame);
        double kappa = 1.0;
        double dkappa_darea = 0.0;
        if (rescale) {
            const double det = moments.cov2d.determinant();
            kappa = area_match_factor(moments);
            // det(cov2d) = area^2 / 108 for every triangle, so kappa is a
            // constant until the epsilon floor takes over.
            if (det < kKappaEpsilon) {
                dkappa_darea = 1.0 / (std::numbers::pi * std::sqrt(kKappaEpsilon));
            }
        }

        const Vec3 eij = vj - vi;
        const Vec3 eik = vk - vi;
        const Vec3 ejk = vk - vj;
        const Vec3 gij = kappa / 36.0 * (gs * eij);
        const Vec3 gik = kappa / 36.0 * (gs * eik);
        const Vec3 gjk = kappa / 36.0 * (gs * ejk);
        Vec3 g_vi = -gij - gik;
        Vec3 g_vj = gij - gjk;
        Vec3 g_vk = gik + gjk;

        const Vec3 cross = eij.cross(eik);
        const double cross_norm = cross.norm();
        if (cross_norm > 0.0) {
            const Vec3 n = cross / cross_norm;
            Vec3 g_cross = Vec3::Zero();
            if (dkappa_darea != 0.0) {
                const Mat3 m = (eij * eij.transpose() + eik * eik.transpose() + ejk * ejk.transpose()) / 36.0;
                const double g_kappa = (grad_cov3ds[f].array() * m.array()).sum();
                g_cross += 0.5 * g_kappa * dkappa_darea * n;
            }
            if (!frame.degenerate) {
                const Vec3 g_n = sz2 * (gs * n);
                g_cross += (g_n - n * n.dot(g_n)) / cross_norm;
            }
            const Vec3 g_eij = eik.cross(g_cross);
            const Vec3 g_eik = g_cross.cross(eij);
            g_vi -= g_eij + g_eik;
            g_vj += g_eij;
            g_vk += g_eik;
        }

        out.vertices[t[0]] += g_vi;
        out.vertices[t[1]] += g_vj;
        out.vertices[t[2]] += g_vk;
    }
    return out;
}

Eigen::Quaterniond rotation_to_quaternion(const Mat3 &rotation) {
    Eigen::Quaterniond q(rotation);
    q.normalize();
    if (q.w() < 0.0) {
        q.coeffs() = -q.coeffs();
    }
    return q;
}

void export_gaussians(std::span<const FacetGaussian> gaussians, const std::filesystem::path &path) {
    ply::Data data;
    data.format = ply::Format::BinaryLittleEndian;
    data.comments.push_back("facet gaussians written by gmr");

    ply::Element verts;
    verts.name = "vertex";
    verts.count = gaussians.size();
    const char *names[] = {"x",       "y",       "z",       "f_dc_0",  "f_dc_1", "f_dc_2",
                           "opacity", "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",
                           "rot_2",   "rot_3"};
    for (const char *name : names) {
        ply::Property p;
        p.name = name;
        p.type = ply::Type::Float32;
        p.values.reserve(gaussians.size());
        verts.properties.push_back(std::move(p));
    }

    const double opacity_logit = std::log(kExportOpacity / (1.0 - kExportOpacity));
    for (const auto &g : gaussians) {
        const Eigen::Quaterniond q = rotation_to_quaternion(g.rotation);
        const double o = std::clamp(g.opacity, 1.0 - kExportOpacity, kExportOpacity);
        const double row[] = {
            g.mean.x(),
            g.mean.y(),
            g.mean.z(),
            (g.color_dc.x() - 0.5) / kShC0,
            (g.color_dc.y() - 0.5) / kShC0,
            (g.color_dc.z() - 0.5) / kShC0,
            o == kExportOpacity ? opacity_logit : std::log(o / (1.0 - o)),
            std::log(std::max(g.scales.x(), kExportMinScale)),
            std::log(std::max(g.scales.y(), kExportMinScale)),
            std::log(std::max(g.scales.z(), kExportMinScale)),
            q.w(),
            q.x(),
            q.y(),
            q.z(),
        };
        for (std::size_t k = 0; k < std::size(row); ++k) {
            verts.properties[k].values.push_back(row[k]);
        }
    }
    data.elements.push_back(std::move(verts));
    ply::write(path, data);
}

std::vector<FacetGaussian> import_gaussians(const std::filesystem::path &path) {
    const ply::Data data = ply::read(path);
    const ply::Element *verts = data.find("vertex");
    if (!verts) {
        throw ParseError(path.string(), 0, "no 'vertex' element");
    }
    auto column = [&](const char *name) -> const std::vector<double> & {
        const ply::Property *p = verts->find(name);
        if (!p || p->is_list) {
            throw ParseError(path.string(), 0, std::string("missing property '") + name + "'");
        }
        return p->values;
    };
    const auto &x = column("x");
    const auto &y = column("y");
    const auto &z = column("z");
    const auto &dc0 = column("f_dc_0");
    const auto &dc1 = column("f_dc_1");
    const auto &dc2 = column("f_dc_2");
    const auto &op = column("opacity");
    const auto &s0 = column("scale_0");
    const auto &s1 = column("scale_1");
    const auto &s2 = column("scale_2");
    const auto &r0 = column("rot_0");
    const auto &r1 = column("rot_1");
    const auto &r2 = column("rot_2");
    const auto &r3 = column("rot_3");

    std::vector<FacetGaussian> out(verts->count);
    for (std::size_t i = 0; i < verts->count; ++i) {
        FacetGaussian &g = out[i];
        g.mean = {x[i], y[i], z[i]};
        g.color_dc = Vec3(dc0[i], dc1[i], dc2[i]) * kShC0 + Vec3::Constant(0.5);
        g.opacity = 1.0 / (1.0 + std::exp(-op[i]));
        g.scales = {std::exp(s0[i]), std::exp(s1[i]), std::exp(s2[i])};
        g.rotation = Eigen::Quaterniond(r0[i], r1[i], r2[i], r3[i]).normalized().toRotationMatrix();
        g.cov3d = g.rotation * g.scales.cwiseAbs2().asDiagonal() * g.rotation.transpose();
        g.source_facet = static_cast<int>(i);
    }
    return out;
}

} // namespace gmr

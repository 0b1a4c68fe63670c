#include "gmr/mesh.hpp"

#include "gmr/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

namespace gmr {

void validate(const TriangleMesh &mesh) {
    const auto n = static_cast<long>(mesh.vertices.size());
    if (mesh.colors.size() != mesh.vertices.size()) {
        throw GeometryError("mesh has " + std::to_string(mesh.colors.size()) + " colors for " +
                            std::to_string(n) + " vertices");
    }
    for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
        const auto &t = mesh.facets[f];
        for (int idx : t) {
            if (idx < 0 || idx >= n) {
                throw GeometryError("facet " + std::to_string(f) + " references vertex " +
                                    std::to_string(idx) + " but mesh has " + std::to_string(n) +
                                    " vertices");
            }
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            throw GeometryError("facet " + std::to_string(f) + " repeats a vertex index");
        }
    }
}

std::size_t Topology::boundary_edge_count() const {
    return static_cast<std::size_t>(
        std::count(edge_facet_count.begin(), edge_facet_count.end(), 1));
}

std::size_t Topology::non_manifold_edge_count() const {
    return static_cast<std::size_t>(std::count_if(edge_facet_count.begin(), edge_facet_count.end(),
                                                  [](int c) { return c > 2; }));
}

Topology build_topology(const TriangleMesh &mesh) {
    std::vector<Edge> incidences;
    incidences.reserve(mesh.facets.size() * 3);
    for (const auto &t : mesh.facets) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k];
            int b = t[(k + 1) % 3];
            incidences.emplace_back(std::min(a, b), std::max(a, b));
        }
    }
    std::sort(incidences.begin(), incidences.end());

    Topology topo;
    for (std::size_t i = 0; i < incidences.size();) {
        std::size_t j = i;
        while (j < incidences.size() && incidences[j] == incidences[i]) {
            ++j;
        }
        topo.edges.push_back(incidences[i]);
        topo.edge_facet_count.push_back(static_cast<int>(j - i));
        i = j;
    }

    topo.adjacency.assign(mesh.vertices.size(), {});
    for (const auto &[a, b] : topo.edges) {
        topo.adjacency[a].push_back(b);
        topo.adjacency[b].push_back(a);
    }
    for (auto &nbrs : topo.adjacency) {
        std::sort(nbrs.begin(), nbrs.end());
    }
    return topo;
}

double max_pairwise_distance(const std::vector<Vec3> &points) {
    if (points.size() < 2) {
        return 0.0;
    }
    Vec3 centroid = Vec3::Zero();
    for (const auto &p : points) {
        centroid += p;
    }
    centroid /= static_cast<double>(points.size());

    std::vector<std::pair<double, std::size_t>> by_radius(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        by_radius[i] = {(points[i] - centroid).norm(), i};
    }
    std::sort(by_radius.begin(), by_radius.end(),
              [](const auto &a, const auto &b) { return a.first > b.first; });

    // |p - q| <= r_p + r_q, so once r_i + r_j falls below the best squared
    // candidate no later pair can win.
    double best_sq = 0.0;
    for (std::size_t i = 0; i < by_radius.size(); ++i) {
        const double ri = by_radius[i].first;
        if (2.0 * ri * 2.0 * ri < best_sq) {
            break;
        }
        const Vec3 &p = points[by_radius[i].second];
        for (std::size_t j = i + 1; j < by_radius.size(); ++j) {
            const double bound = ri + by_radius[j].first;
            if (bound * bound < best_sq) {
                break;
            }
            best_sq = std::max(best_sq, (p - points[by_radius[j].second]).squaredNorm());
        }
    }
    return std::sqrt(best_sq);
}

std::pair<TriangleMesh, NormalizationTransform> normalize_mesh(const TriangleMesh &mesh) {
    if (mesh.vertices.size() < 2) {
        throw GeometryError("normalize_mesh needs at least two vertices");
    }
    Vec3 lo = mesh.vertices.front();
    Vec3 hi = lo;
    for (const auto &v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const double diameter = max_pairwise_distance(mesh.vertices);
    if (!(diameter > 0.0)) {
        throw GeometryError("all vertices are coincident");
    }

    NormalizationTransform xf;
    xf.center = 0.5 * (lo + hi);
    xf.scale = 2.0 / diameter;

    TriangleMesh out = mesh;
    for (auto &v : out.vertices) {
        v = xf.apply(v);
    }
    return {std::move(out), xf};
}

int icosphere_level_for(std::size_t target_facets) {
    int level = 0;
    std::size_t facets = 20;
    while (facets < target_facets) {
        facets *= 4;
        ++level;
    }
    return level;
}

TriangleMesh make_icosphere(std::size_t target_facets, double radius) {
    const int level = icosphere_level_for(target_facets);
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;

    std::vector<Vec3> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto &v : verts) {
        v.normalize();
    }
    std::vector<Facet> facets = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };

    for (int l = 0; l < level; ++l) {
        std::map<Edge, int> midpoint;
        auto mid = [&](int a, int b) {
            const Edge key{std::min(a, b), std::max(a, b)};
            auto it = midpoint.find(key);
            if (it != midpoint.end()) {
                return it->second;
            }
            verts.push_back((verts[a] + verts[b]).normalized());
            const int idx = static_cast<int>(verts.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Facet> next;
        next.reserve(facets.size() * 4);
        for (const auto &t : facets) {
            const int ab = mid(t[0], t[1]);
            const int bc = mid(t[1], t[2]);
            const int ca = mid(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        facets = std::move(next);
    }

    TriangleMesh mesh;
    mesh.vertices.reserve(verts.size());
    for (const auto &v : verts) {
        mesh.vertices.push_back(v * radius);
    }
    mesh.colors.assign(mesh.vertices.size(), kDefaultGray);
    mesh.facets = std::move(facets);
    return mesh;
}

TriangleMesh translate_mesh(const TriangleMesh &mesh, const Vec3 &offset) {
    TriangleMesh out = mesh;
    for (auto &v : out.vertices) {
        v += offset;
    }
    return out;
}

TriangleMesh make_grid_cube(int subdivisions, double half_extent) {
    if (subdivisions < 1) {
        throw GeometryError("cube subdivisions must be >= 1");
    }
    const int n = subdivisions;
    TriangleMesh mesh;
    std::map<std::array<long, 3>, int> index_of;
    auto vertex = [&](const Vec3 &p) {
        // Grid points are exact multiples of 1/n, so rounding gives a stable key.
        const std::array<long, 3> key{std::lround(p.x() * n), std::lround(p.y() * n),
                                      std::lround(p.z() * n)};
        auto it = index_of.find(key);
        if (it != index_of.end()) {
            return it->second;
        }
        mesh.vertices.push_back(p * half_extent);
        const int idx = static_cast<int>(mesh.vertices.size()) - 1;
        index_of.emplace(key, idx);
        return idx;
    };

    for (int axis = 0; axis < 3; ++axis) {
        for (int side : {-1, 1}) {
            const int u_axis = (axis + 1) % 3;
            const int v_axis = (axis + 2) % 3;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    auto corner = [&](int di, int dj) {
                        Vec3 p = Vec3::Zero();
                        p[axis] = side;
                        p[u_axis] = -1.0 + 2.0 * (i + di) / n;
                        p[v_axis] = -1.0 + 2.0 * (j + dj) / n;
                        return vertex(p);
                    };
                    const int a = corner(0, 0);
                    const int b = corner(1, 0);
                    const int c = corner(1, 1);
                    const int d = corner(0, 1);
                    // (u, v, axis) is right-handed, so counter-clockwise in
                    // (u, v) faces +axis.
                    if (side > 0) {
                        mesh.facets.push_back({a, b, c});
                        mesh.facets.push_back({a, c, d});
                    } else {
                        mesh.facets.push_back({a, c, b});
                        mesh.facets.push_back({a, d, c});
                    }
                }
            }
        }
    }
    mesh.colors.assign(mesh.vertices.size(), kDefaultGray);
    return mesh;
}

std::vector<FacetGeometry> mesh_area_and_normals(const TriangleMesh &mesh) {
    std::vector<FacetGeometry> out(mesh.facets.size());
    for (std::size_t f = 0; f < mesh.facets.size(); ++f) {
        const auto &t = mesh.facets[f];
        const Vec3 &a = mesh.vertices[t[0]];
        const Vec3 cross = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
        const double len = cross.norm();
        out[f].area = 0.5 * len;
        if (out[f].area < kDegenerateArea) {
            out[f].degenerate = true;
            out[f].normal = Vec3::UnitZ();
        } else {
            out[f].normal = cross / len;
        }
    }
    return out;
}

double total_area(const TriangleMesh &mesh) {
    double sum = 0.0;
    for (const auto &g : mesh_area_and_normals(mesh)) {
        sum += g.area;
    }
    return sum;
}

namespace {
constexpr std::size_t kSampleChunk = 4096;
}

SurfaceSamples sample_surface(const TriangleMesh &mesh, std::size_t n, std::uint64_t seed) {
    const auto geom = mesh_area_and_normals(mesh);
    std::vector<double> cdf(geom.size());
    double acc = 0.0;
    for (std::size_t f = 0; f < geom.size(); ++f) {
        acc += geom[f].area;
        cdf[f] = acc;
    }
    if (!(acc > 0.0)) {
        throw GeometryError("cannot sample a mesh with zero surface area");
    }

    SurfaceSamples out;
    out.points.resize(n);
    out.normals.resize(n);
    out.facet.resize(n);

    const auto chunks = static_cast<long>((n + kSampleChunk - 1) / kSampleChunk);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < chunks; ++c) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(c), 0x5eedu};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const std::size_t begin = static_cast<std::size_t>(c) * kSampleChunk;
        const std::size_t end = std::min(n, begin + kSampleChunk);
        for (std::size_t s = begin; s < end; ++s) {
            const double pick = unit(rng) * acc;
            auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
            std::size_t f = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()),
                                                  cdf.size() - 1);
            while (geom[f].area <= 0.0 && f > 0) {
                --f;
            }
            double a = unit(rng);
            double b = unit(rng);
            if (a + b > 1.0) {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            // Sorted corners: the sample position must not depend on winding.
            auto t = mesh.facets[f];
            std::sort(t.begin(), t.end());
            const Vec3 &v0 = mesh.vertices[t[0]];
            out.points[s] = v0 + a * (mesh.vertices[t[1]] - v0) + b * (mesh.vertices[t[2]] - v0);
            out.normals[s] = geom[f].normal;
            out.facet[s] = static_cast<int>(f);
        }
    }
    return out;
}

} // namespace gmr

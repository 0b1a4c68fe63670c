#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace gmr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

using Facet = std::array<int, 3>;
using Edge = std::pair<int, int>;

inline const Vec3 kDefaultGray{0.5, 0.5, 0.5};

/// Indexed triangle mesh with one RGB color per vertex.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Vec3> colors;
    std::vector<Facet> facets;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t facet_count() const { return facets.size(); }
};

/// Throws GeometryError when a facet index is out of range or repeated, or
/// when colors and vertices disagree in length.
void validate(const TriangleMesh &mesh);

/// Connectivity derived from the facet list. Fixed for the lifetime of an
/// optimization run, so it is computed once and passed around separately.
struct Topology {
    /// Undirected edges, smaller index first, sorted lexicographically.
    std::vector<Edge> edges;
    /// Neighbor indices per vertex, sorted ascending.
    std::vector<std::vector<int>> adjacency;
    /// Number of facets incident to each edge (parallel to `edges`).
    std::vector<int> edge_facet_count;

    std::size_t boundary_edge_count() const;
    std::size_t non_manifold_edge_count() const;
};

Topology build_topology(const TriangleMesh &mesh);

struct NormalizationTransform {
    Vec3 center = Vec3::Zero();
    double scale = 1.0;

    Vec3 apply(const Vec3 &p) const { return (p - center) * scale; }
};

/// Largest distance between any two vertices. Exact; uses a sorted
/// radius bound to prune pairs.
double max_pairwise_distance(const std::vector<Vec3> &points);

/// Centers on the bounding-box center and scales so that the largest
/// vertex-to-vertex distance is 2.0.
std::pair<TriangleMesh, NormalizationTransform> normalize_mesh(const TriangleMesh &mesh);

/// Subdivided icosahedron at the smallest level L with 20 * 4^L >= target_facets.
TriangleMesh make_icosphere(std::size_t target_facets, double radius = 1.0);

int icosphere_level_for(std::size_t target_facets);

/// Rigid translation of every vertex.
TriangleMesh translate_mesh(const TriangleMesh &mesh, const Vec3 &offset);

/// Axis-aligned cube of the given half extent, every face split into an
/// n x n grid of quads (two triangles each), outward winding.
TriangleMesh make_grid_cube(int subdivisions, double half_extent = 1.0);

struct FacetGeometry {
    double area = 0.0;
    Vec3 normal = Vec3::UnitZ();
    bool degenerate = false;
};

constexpr double kDegenerateArea = 1e-12;

std::vector<FacetGeometry> mesh_area_and_normals(const TriangleMesh &mesh);

double total_area(const TriangleMesh &mesh);

struct SurfaceSamples {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<int> facet;

    std::size_t size() const { return points.size(); }
};

/// Area-uniform surface samples. Work is split into fixed-size chunks, each
/// with its own generator seeded from (seed, chunk), so the result does not
/// depend on the number of threads.
SurfaceSamples sample_surface(const TriangleMesh &mesh, std::size_t n, std::uint64_t seed);

} // namespace gmr

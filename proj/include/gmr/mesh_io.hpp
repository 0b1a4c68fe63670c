#pragma once

#include "gmr/mesh.hpp"

#include <filesystem>
#include <string>

namespace gmr {

/// What the loader saw besides the mesh itself. Non-manifold input is
/// accepted and only counted here.
struct LoadSummary {
    std::size_t vertices = 0;
    std::size_t facets = 0;
    std::size_t polygons_triangulated = 0;
    std::size_t boundary_edges = 0;
    std::size_t non_manifold_edges = 0;
    bool had_colors = false;

    std::string to_string() const;
};

/// Loads OBJ or PLY (chosen by extension). Polygons are fan-triangulated.
/// Vertex colors come from PLY red/green/blue (uchar or float) or OBJ
/// "v x y z r g b" lines; otherwise every vertex is 0.5 gray.
TriangleMesh load_mesh(const std::filesystem::path &path, LoadSummary *summary = nullptr);

/// Writes an ASCII PLY with double positions and float colors.
void save_mesh(const TriangleMesh &mesh, const std::filesystem::path &path);

} // namespace gmr

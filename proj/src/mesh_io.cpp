#include "gmr/mesh_io.hpp"

#include "gmr/error.hpp"
#include "gmr/ply.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace gmr {

std::string LoadSummary::to_string() const {
    std::ostringstream os;
    os << vertices << " vertices, " << facets << " facets";
    if (polygons_triangulated) {
        os << " (" << polygons_triangulated << " polygons fan-triangulated)";
    }
    os << ", " << boundary_edges << " boundary edges";
    if (non_manifold_edges) {
        os << ", " << non_manifold_edges << " NON-MANIFOLD edges";
    }
    os << (had_colors ? ", vertex colors" : ", no colors (gray)");
    return os.str();
}

namespace {

std::string lower_extension(const std::filesystem::path &path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

double to_double(const std::string &tok, const std::string &src, std::size_t line) {
    double v = 0.0;
    const char *first = tok.data();
    const char *last = first + tok.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw ParseError(src, line, "expected a number, got '" + tok + "'");
    }
    return v;
}

void add_polygon(TriangleMesh &mesh, const std::vector<long> &poly, LoadSummary &summary,
                 const std::string &src, std::size_t line, long base) {
    if (poly.size() < 3) {
        throw ParseError(src, line, "face has fewer than three vertices");
    }
    if (poly.size() > 3) {
        ++summary.polygons_triangulated;
    }
    const auto n = static_cast<long>(mesh.vertices.size());
    for (long idx : poly) {
        if (idx < 0 || idx >= n) {
            throw ParseError(src, line,
                             "vertex index " + std::to_string(idx + base) + " out of range (mesh has " +
                                 std::to_string(n) + " vertices)");
        }
    }
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        const Facet f{static_cast<int>(poly[0]), static_cast<int>(poly[k]),
                      static_cast<int>(poly[k + 1])};
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw ParseError(src, line, "face repeats a vertex index");
        }
        mesh.facets.push_back(f);
    }
}

TriangleMesh load_obj(const std::filesystem::path &path, LoadSummary &summary) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::string src = path.string();
    TriangleMesh mesh;
    std::vector<bool> has_color;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> toks;
    std::vector<long> poly;
    // Faces are resolved after all vertices are known, so out-of-range
    // references that point forward still report the face's line.
    struct PendingFace {
        std::vector<long> indices;
        std::size_t line;
    };
    std::vector<PendingFace> faces;

    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        std::istringstream ls(line);
        std::string kw;
        if (!(ls >> kw)) {
            continue;
        }
        toks.clear();
        for (std::string t; ls >> t;) {
            toks.push_back(t);
        }
        if (kw == "v") {
            if (toks.size() < 3) {
                throw ParseError(src, line_no, "vertex needs three coordinates");
            }
            mesh.vertices.emplace_back(to_double(toks[0], src, line_no), to_double(toks[1], src, line_no),
                                       to_double(toks[2], src, line_no));
            if (toks.size() >= 6) {
                mesh.colors.emplace_back(to_double(toks[3], src, line_no),
                                         to_double(toks[4], src, line_no),
                                         to_double(toks[5], src, line_no));
                has_color.push_back(true);
            } else {
                mesh.colors.push_back(kDefaultGray);
                has_color.push_back(false);
            }
        } else if (kw == "f") {
            poly.clear();
            const auto n = static_cast<long>(mesh.vertices.size());
            for (const auto &t : toks) {
                const std::string head = t.substr(0, t.find('/'));
                long idx = 0;
                const auto res = std::from_chars(head.data(), head.data() + head.size(), idx);
                if (res.ec != std::errc() || res.ptr != head.data() + head.size() || idx == 0) {
                    throw ParseError(src, line_no, "bad face index '" + t + "'");
                }
                // Negative indices are relative to the vertices read so far.
                poly.push_back(idx > 0 ? idx - 1 : n + idx);
            }
            faces.push_back({poly, line_no});
        }
        // Other statements (vt, vn, o, g, usemtl, s, ...) carry nothing we use.
    }

    for (const auto &f : faces) {
        add_polygon(mesh, f.indices, summary, src, f.line, 1);
    }
    summary.had_colors = std::any_of(has_color.begin(), has_color.end(), [](bool b) { return b; });
    return mesh;
}

TriangleMesh load_ply(const std::filesystem::path &path, LoadSummary &summary) {
    const std::string src = path.string();
    const ply::Data data = ply::read(path);
    const ply::Element *verts = data.find("vertex");
    if (!verts) {
        throw ParseError(src, 0, "no 'vertex' element");
    }
    const auto *x = verts->find("x");
    const auto *y = verts->find("y");
    const auto *z = verts->find("z");
    if (!x || !y || !z || x->is_list || y->is_list || z->is_list) {
        throw ParseError(src, 0, "vertex element lacks scalar x, y, z properties");
    }
    const auto *r = verts->find("red");
    const auto *g = verts->find("green");
    const auto *b = verts->find("blue");
    const bool colors = r && g && b && !r->is_list && !g->is_list && !b->is_list;

    TriangleMesh mesh;
    mesh.vertices.resize(verts->count);
    mesh.colors.assign(verts->count, kDefaultGray);
    for (std::size_t i = 0; i < verts->count; ++i) {
        mesh.vertices[i] = {x->values[i], y->values[i], z->values[i]};
        if (colors) {
            auto channel = [](const ply::Property &p, std::size_t row) {
                const bool integral = p.type != ply::Type::Float32 && p.type != ply::Type::Float64;
                return integral ? p.values[row] / 255.0 : p.values[row];
            };
            mesh.colors[i] = {channel(*r, i), channel(*g, i), channel(*b, i)};
        }
    }
    summary.had_colors = colors;

    if (const ply::Element *faces = data.find("face")) {
        const ply::Property *idx = faces->find("vertex_indices");
        if (!idx) {
            idx = faces->find("vertex_index");
        }
        if (!idx || !idx->is_list) {
            throw ParseError(src, 0, "face element lacks a vertex_indices list");
        }
        std::vector<long> poly;
        for (std::size_t f = 0; f < faces->count; ++f) {
            poly.assign(idx->lists[f].begin(), idx->lists[f].end());
            const std::size_t line = faces->first_line ? faces->first_line + f : 0;
            add_polygon(mesh, poly, summary, src, line, 0);
        }
    }
    return mesh;
}

} // namespace

TriangleMesh load_mesh(const std::filesystem::path &path, LoadSummary *summary) {
    LoadSummary local;
    const std::string ext = lower_extension(path);
    TriangleMesh mesh;
    if (ext == ".obj") {
        mesh = load_obj(path, local);
    } else if (ext == ".ply") {
        mesh = load_ply(path, local);
    } else {
        throw IoError("unsupported mesh format '" + ext + "' (expected .obj or .ply): " + path.string());
    }
    validate(mesh);

    const Topology topo = build_topology(mesh);
    local.vertices = mesh.vertex_count();
    local.facets = mesh.facet_count();
    local.boundary_edges = topo.boundary_edge_count();
    local.non_manifold_edges = topo.non_manifold_edge_count();
    if (summary) {
        *summary = local;
    }
    return mesh;
}

void save_mesh(const TriangleMesh &mesh, const std::filesystem::path &path) {
    validate(mesh);
    ply::Data data;
    data.format = ply::Format::Ascii;
    data.comments.push_back("written by gmr");

    ply::Element verts;
    verts.name = "vertex";
    verts.count = mesh.vertex_count();
    const char *pos_names[] = {"x", "y", "z"};
    const char *col_names[] = {"red", "green", "blue"};
    for (int k = 0; k < 3; ++k) {
        ply::Property p;
        p.name = pos_names[k];
        p.type = ply::Type::Float64;
        p.values.resize(verts.count);
        for (std::size_t i = 0; i < verts.count; ++i) {
            p.values[i] = mesh.vertices[i][k];
        }
        verts.properties.push_back(std::move(p));
    }
    for (int k = 0; k < 3; ++k) {
        ply::Property p;
        p.name = col_names[k];
        p.type = ply::Type::Float32;
        p.values.resize(verts.count);
        for (std::size_t i = 0; i < verts.count; ++i) {
            p.values[i] = mesh.colors[i][k];
        }
        verts.properties.push_back(std::move(p));
    }

    ply::Element faces;
    faces.name = "face";
    faces.count = mesh.facet_count();
    ply::Property idx;
    idx.name = "vertex_indices";
    idx.is_list = true;
    idx.count_type = ply::Type::UInt8;
    idx.type = ply::Type::Int32;
    idx.lists.reserve(faces.count);
    for (const auto &t : mesh.facets) {
        idx.lists.push_back({t[0], t[1], t[2]});
    }
    faces.properties.push_back(std::move(idx));

    data.elements.push_back(std::move(verts));
    data.elements.push_back(std::move(faces));
    ply::write(path, data);
}

} // namespace gmr

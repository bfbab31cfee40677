#pragma once

// Triangle mesh container, ASCII OBJ IO (v/f records only, 1-based, triangles),
// adjacency, per-face geometry, and the closed test primitives used everywhere
// in the test suite. Positions are 64-bit, model units are millimeters.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace meshrec {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    bool empty() const { return vertices.empty(); }
};

inline void validate_mesh(const TriMesh& m) {
    if (m.empty()) {
        if (!m.faces.empty()) throw std::invalid_argument("mesh: faces without vertices");
        return;
    }
    if (m.vertex_count() < 3) throw std::invalid_argument("mesh: fewer than 3 vertices");
    const int n = m.vertex_count();
    for (size_t f = 0; f < m.faces.size(); ++f) {
        const Face& face = m.faces[f];
        for (int k = 0; k < 3; ++k)
            if (face[k] < 0 || face[k] >= n)
                throw std::invalid_argument("mesh: face " + std::to_string(f) +
                                            " references vertex " + std::to_string(face[k]) +
                                            " out of range");
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
            throw std::invalid_argument("mesh: face " + std::to_string(f) +
                                        " has repeated vertices");
    }
}

// ---------------------------------------------------------------------------
// OBJ IO

inline TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);

    TriMesh mesh;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;  // blank line
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p.x() >> p.y() >> p.z()))
                throw std::runtime_error("load_obj: malformed vertex at line " +
                                         std::to_string(lineno) + " of " + path);
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                // accept i, i/j, i/j/k, i//k; only the vertex index is used
                const size_t slash = tok.find('/');
                const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                int v = 0;
                const auto res = std::from_chars(head.data(), head.data() + head.size(), v);
                if (res.ec != std::errc() || res.ptr != head.data() + head.size())
                    throw std::runtime_error("load_obj: malformed face index '" + tok +
                                             "' at line " + std::to_string(lineno));
                if (v <= 0)
                    throw std::runtime_error("load_obj: face index " + std::to_string(v) +
                                             " at line " + std::to_string(lineno) +
                                             " (OBJ indices are 1-based)");
                idx.push_back(v - 1);
            }
            if (idx.size() != 3)
                throw std::runtime_error("load_obj: non-triangle face (" +
                                         std::to_string(idx.size()) + " vertices) at line " +
                                         std::to_string(lineno));
            mesh.faces.push_back({idx[0], idx[1], idx[2]});
        }
        // vn/vt/usemtl/comments are ignored
    }
    validate_mesh(mesh);
    return mesh;
}

namespace detail {
inline void append_double(std::string& s, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip
    s.append(buf, res.ptr);
}
}  // namespace detail

inline void save_obj(const TriMesh& mesh, const std::string& path) {
    if (mesh.empty()) throw std::invalid_argument("save_obj: refusing to write empty mesh");
    validate_mesh(mesh);
    std::string out;
    out.reserve(mesh.vertices.size() * 32 + mesh.faces.size() * 16);
    for (const Vec3& p : mesh.vertices) {
        out += "v ";
        detail::append_double(out, p.x());
        out += ' ';
        detail::append_double(out, p.y());
        out += ' ';
        detail::append_double(out, p.z());
        out += '\n';
    }
    for (const Face& f : mesh.faces) {
        out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' +
               std::to_string(f[2] + 1) + '\n';
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_obj: cannot open " + path);
    os << out;
    if (!os) throw std::runtime_error("save_obj: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Adjacency and per-face geometry

using AdjacencyList = std::vector<std::vector<int>>;

inline AdjacencyList vertex_adjacency(const TriMesh& mesh) {
    validate_mesh(mesh);
    AdjacencyList adj(mesh.vertices.size());
    auto link = [&](int a, int b) {
        adj[static_cast<size_t>(a)].push_back(b);
        adj[static_cast<size_t>(b)].push_back(a);
    };
    for (const Face& f : mesh.faces) {
        link(f[0], f[1]);
        link(f[1], f[2]);
        link(f[2], f[0]);
    }
    for (auto& nbr : adj) {
        std::sort(nbr.begin(), nbr.end());
        nbr.erase(std::unique(nbr.begin(), nbr.end()), nbr.end());
    }
    return adj;
}

inline std::vector<Vec3> face_normals(const TriMesh& mesh) {
    validate_mesh(mesh);
    std::vector<Vec3> normals;
    normals.reserve(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& face = mesh.faces[f];
        const Vec3 n = (mesh.vertices[face[1]] - mesh.vertices[face[0]])
                           .cross(mesh.vertices[face[2]] - mesh.vertices[face[0]]);
        const double len = n.norm();
        if (len <= 1e-300)
            throw std::runtime_error("face_normals: degenerate (zero-area) face " +
                                     std::to_string(f));
        normals.push_back(n / len);
    }
    return normals;
}

// Unique undirected edges, lexicographically sorted.
inline std::vector<std::array<int, 2>> edge_list(const TriMesh& mesh) {
    validate_mesh(mesh);
    std::set<std::array<int, 2>> edges;
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            edges.insert({std::min(a, b), std::max(a, b)});
        }
    return {edges.begin(), edges.end()};
}

// Per-face edge enumeration (3F entries) as used by the edge and normal losses:
// face t contributes its three directed edges in winding order.
inline std::vector<std::array<int, 2>> face_edges(const TriMesh& mesh) {
    std::vector<std::array<int, 2>> out;
    out.reserve(mesh.faces.size() * 3);
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k) out.push_back({f[k], f[(k + 1) % 3]});
    return out;
}

// Manifold test: every undirected edge borders at most two faces, every directed
// edge appears at most once (consistent orientation), and each vertex's incident
// faces form a single fan.
inline bool is_manifold(const TriMesh& mesh, std::string* why = nullptr) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    std::map<std::pair<int, int>, int> directed;
    std::map<std::pair<int, int>, int> undirected;
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            if (++directed[{a, b}] > 1) return fail("directed edge repeated (orientation)");
            if (++undirected[{std::min(a, b), std::max(a, b)}] > 2)
                return fail("edge shared by more than two faces");
        }
    // single fan per vertex: count fan components among incident faces
    std::vector<std::vector<std::pair<int, int>>> incident(mesh.vertices.size());
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k)
            incident[static_cast<size_t>(f[k])].push_back({f[(k + 1) % 3], f[(k + 2) % 3]});
    for (size_t v = 0; v < incident.size(); ++v) {
        const auto& fans = incident[v];
        if (fans.empty()) continue;
        std::map<int, int> next;  // neighbor -> next neighbor around v
        for (const auto& [a, b] : fans) {
            if (next.count(a)) return fail("vertex fan not a simple cycle/path");
            next[a] = b;
        }
        // follow the successor chain from a start without predecessor (or any, if cyclic);
        // one walk must visit every incident face
        std::set<int> heads;
        for (const auto& [a, b] : next) heads.insert(a);
        for (const auto& [a, b] : next) heads.erase(b);
        if (heads.size() > 1) return fail("vertex fan splits into multiple components");
        const int start = heads.empty() ? next.begin()->first : *heads.begin();
        std::set<int> seen;
        int cur = start;
        while (next.count(cur) && !seen.count(cur)) {
            seen.insert(cur);
            cur = next.at(cur);
        }
        if (seen.size() != next.size()) return fail("vertex fan disconnected");
    }
    return true;
}

inline bool is_closed(const TriMesh& mesh) {
    std::map<std::pair<int, int>, int> undirected;
    for (const Face& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            ++undirected[{std::min(a, b), std::max(a, b)}];
        }
    for (const auto& [e, c] : undirected)
        if (c != 2) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Test primitives

inline TriMesh tetrahedron() {
    TriMesh m;
    m.vertices = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
    m.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
    return m;
}

inline TriMesh icosahedron() {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {Vec3(-1, t, 0), Vec3(1, t, 0),  Vec3(-1, -t, 0), Vec3(1, -t, 0),
                  Vec3(0, -1, t), Vec3(0, 1, t),  Vec3(0, -1, -t), Vec3(0, 1, -t),
                  Vec3(t, 0, -1), Vec3(t, 0, 1),  Vec3(-t, 0, -1), Vec3(-t, 0, 1)};
    for (Vec3& v : m.vertices) v.normalize();
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    return m;
}

// Icosphere by midpoint subdivision, unit radius, outward CCW winding.
inline TriMesh icosphere(int subdivisions) {
    TriMesh m = icosahedron();
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int id = m.vertex_count();
            m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
            midpoint[key] = id;
            return id;
        };
        std::vector<Face> faces;
        faces.reserve(m.faces.size() * 4);
        for (const Face& f : m.faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            faces.push_back({f[0], ab, ca});
            faces.push_back({f[1], bc, ab});
            faces.push_back({f[2], ca, bc});
            faces.push_back({ab, bc, ca});
        }
        m.faces = std::move(faces);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Point/triangle utilities (used by hierarchy up-sampling and the rasterizer)

// Closest point on triangle (a,b,c) to p, returned as barycentric weights
// (wa, wb, wc), each in [0,1], summing to 1. Ericson, Real-Time Collision Detection.
inline Vec3 closest_point_barycentric(const Vec3& p, const Vec3& a, const Vec3& b,
                                      const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return Vec3(1, 0, 0);

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return Vec3(0, 1, 0);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        const double v = d1 / (d1 - d3);
        return Vec3(1 - v, v, 0);
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return Vec3(0, 0, 1);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        const double w = d2 / (d2 - d6);
        return Vec3(1 - w, 0, w);
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return Vec3(0, 1 - w, w);
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return Vec3(1 - v - w, v, w);
}

// 2D point-in-triangle (inclusive of edges), robust to either winding.
inline bool point_in_triangle_2d(double px, double py, const Eigen::Vector2d& a,
                                 const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    auto cross = [](double ox, double oy, double ax, double ay, double bx, double by) {
        return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
    };
    const double s0 = cross(a.x(), a.y(), b.x(), b.y(), px, py);
    const double s1 = cross(b.x(), b.y(), c.x(), c.y(), px, py);
    const double s2 = cross(c.x(), c.y(), a.x(), a.y(), px, py);
    const bool has_neg = s0 < 0 || s1 < 0 || s2 < 0;
    const bool has_pos = s0 > 0 || s1 > 0 || s2 > 0;
    return !(has_neg && has_pos);
}

}  // namespace meshrec

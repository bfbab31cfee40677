#pragma once

// Coarse-to-fine mesh hierarchy built by greedy quadric-error edge contraction.
//
// Each level keeps the original template positions of its surviving vertices, so
// the level meshes satisfy pool(D, fine.vertices) == coarse.vertices exactly and
// the whole hierarchy can be rebuilt from the finest mesh plus the D chain.
// The quadric-optimal contraction point is used while ordering and validating
// contractions; D stays a pure vertex selection.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "meshrec/mesh.hpp"
#include "meshrec/sparse.hpp"

namespace meshrec {

struct SimplifyResult {
    TriMesh mesh;       // target-vertex coarse mesh
    SparseMatrix down;  // coarse x fine, one-hot vertex selection
    SparseMatrix up;    // fine x coarse, barycentric rows summing to 1
};

struct MeshHierarchy {
    std::vector<TriMesh> levels;      // finest first
    std::vector<SparseMatrix> down;   // down[i]: levels[i] -> levels[i+1]
    std::vector<SparseMatrix> up;     // up[i]:   levels[i+1] -> levels[i]

    int level_count() const { return static_cast<int>(levels.size()); }
};

namespace detail {

using Quadric = Eigen::Matrix4d;

inline Quadric face_quadric(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (len <= 1e-300) return Quadric::Zero();
    const Vec3 un = n / len;
    Eigen::Vector4d plane(un.x(), un.y(), un.z(), -un.dot(a));
    return plane * plane.transpose();
}

struct Contraction {
    double cost;
    int a, b;            // a < b
    uint64_t va, vb;     // vertex versions at push time
    Vec3 placement;

    bool operator>(const Contraction& o) const {
        // min-heap on (cost, a, b): ties broken by the smaller fine-vertex index
        return std::tie(cost, a, b) > std::tie(o.cost, o.a, o.b);
    }
};

// Optimal contraction point of the summed quadric; midpoint fallback when the
// 3x3 block is singular (|det| < 1e-12).
inline Vec3 optimal_point(const Quadric& q, const Vec3& pa, const Vec3& pb) {
    const Eigen::Matrix3d A = q.topLeftCorner<3, 3>();
    const Vec3 rhs = -q.topRightCorner<3, 1>();
    if (std::abs(A.determinant()) < 1e-12) return 0.5 * (pa + pb);
    return A.partialPivLu().solve(rhs);
}

inline double quadric_error(const Quadric& q, const Vec3& p) {
    Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
    return h.dot(q * h);
}

}  // namespace detail

inline SimplifyResult simplify_quadric(const TriMesh& input, int target) {
    validate_mesh(input);
    const int n = input.vertex_count();
    if (target > n) throw std::invalid_argument("simplify_quadric: target exceeds vertex count");
    if (target < 3) throw std::invalid_argument("simplify_quadric: target below 3");
    std::string why;
    if (!is_manifold(input, &why))
        throw std::invalid_argument("simplify_quadric: non-manifold input (" + why + ")");

    if (target == n) {
        SimplifyResult r;
        r.mesh = input;
        r.down = SparseMatrix::identity(n);
        r.up = SparseMatrix::identity(n);
        return r;
    }

    using detail::Quadric;

    // working state; positions move to the quadric-optimal point as edges contract
    std::vector<Vec3> pos = input.vertices;
    std::vector<Quadric> quadric(static_cast<size_t>(n), Quadric::Zero());
    std::vector<std::set<int>> adj(static_cast<size_t>(n));
    std::vector<std::set<int>> vfaces(static_cast<size_t>(n));  // live face ids per vertex
    std::vector<Face> faces = input.faces;
    std::vector<bool> face_alive(faces.size(), true);
    std::vector<bool> alive(static_cast<size_t>(n), true);
    std::vector<uint64_t> version(static_cast<size_t>(n), 0);

    for (size_t f = 0; f < faces.size(); ++f) {
        const Face& face = faces[f];
        const Quadric q =
            detail::face_quadric(pos[face[0]], pos[face[1]], pos[face[2]]);
        for (int k = 0; k < 3; ++k) {
            quadric[static_cast<size_t>(face[k])] += q;
            vfaces[static_cast<size_t>(face[k])].insert(static_cast<int>(f));
            adj[static_cast<size_t>(face[k])].insert(face[(k + 1) % 3]);
            adj[static_cast<size_t>(face[k])].insert(face[(k + 2) % 3]);
        }
    }

    std::priority_queue<detail::Contraction, std::vector<detail::Contraction>,
                        std::greater<detail::Contraction>>
        queue;
    auto push_edge = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        const Quadric q = quadric[static_cast<size_t>(a)] + quadric[static_cast<size_t>(b)];
        const Vec3 p = detail::optimal_point(q, pos[static_cast<size_t>(a)],
                                             pos[static_cast<size_t>(b)]);
        queue.push({detail::quadric_error(q, p), a, b, version[static_cast<size_t>(a)],
                    version[static_cast<size_t>(b)], p});
    };
    for (int v = 0; v < n; ++v)
        for (int w : adj[static_cast<size_t>(v)])
            if (v < w) push_edge(v, w);

    // validity: the link condition plus a face-flip test at the new placement
    auto contraction_valid = [&](int a, int b, const Vec3& p) {
        std::vector<int> common;
        std::set_intersection(adj[static_cast<size_t>(a)].begin(), adj[static_cast<size_t>(a)].end(),
                              adj[static_cast<size_t>(b)].begin(), adj[static_cast<size_t>(b)].end(),
                              std::back_inserter(common));
        int shared_faces = 0;
        for (int f : vfaces[static_cast<size_t>(a)])
            if (vfaces[static_cast<size_t>(b)].count(f)) ++shared_faces;
        if (static_cast<int>(common.size()) != shared_faces) return false;  // link condition
        if (shared_faces < 1 || shared_faces > 2) return false;

        for (int v : {a, b}) {
            for (int f : vfaces[static_cast<size_t>(v)]) {
                const Face& face = faces[static_cast<size_t>(f)];
                if (vfaces[static_cast<size_t>(a)].count(f) &&
                    vfaces[static_cast<size_t>(b)].count(f))
                    continue;  // face disappears
                Vec3 corner[3];
                for (int k = 0; k < 3; ++k)
                    corner[k] = (face[k] == a || face[k] == b) ? p
                                                               : pos[static_cast<size_t>(face[k])];
                const Vec3 before = (pos[static_cast<size_t>(face[1])] - pos[static_cast<size_t>(face[0])])
                                        .cross(pos[static_cast<size_t>(face[2])] -
                                               pos[static_cast<size_t>(face[0])]);
                const Vec3 after = (corner[1] - corner[0]).cross(corner[2] - corner[0]);
                if (after.norm() <= 1e-14) return false;       // collapses to zero area
                if (before.dot(after) <= 0.0) return false;    // normal flips
            }
        }
        return true;
    };

    int live = n;
    while (live > target && !queue.empty()) {
        const detail::Contraction c = queue.top();
        queue.pop();
        if (!alive[static_cast<size_t>(c.a)] || !alive[static_cast<size_t>(c.b)]) continue;
        if (version[static_cast<size_t>(c.a)] != c.va || version[static_cast<size_t>(c.b)] != c.vb)
            continue;  // stale entry
        if (!adj[static_cast<size_t>(c.a)].count(c.b)) continue;
        if (!contraction_valid(c.a, c.b, c.placement)) continue;

        const int keep = c.a, drop = c.b;  // a < b: smaller index is the survivor
        // remove the faces shared by the contracted edge
        std::vector<int> dead_faces;
        for (int f : vfaces[static_cast<size_t>(keep)])
            if (vfaces[static_cast<size_t>(drop)].count(f)) dead_faces.push_back(f);
        for (int f : dead_faces) {
            face_alive[static_cast<size_t>(f)] = false;
            const Face& face = faces[static_cast<size_t>(f)];
            for (int k = 0; k < 3; ++k) vfaces[static_cast<size_t>(face[k])].erase(f);
        }
        // rewire remaining faces of `drop` to `keep`
        for (int f : vfaces[static_cast<size_t>(drop)]) {
            Face& face = faces[static_cast<size_t>(f)];
            for (int k = 0; k < 3; ++k)
                if (face[k] == drop) face[k] = keep;
            vfaces[static_cast<size_t>(keep)].insert(f);
        }
        vfaces[static_cast<size_t>(drop)].clear();
        // adjacency
        adj[static_cast<size_t>(keep)].erase(drop);
        for (int w : adj[static_cast<size_t>(drop)]) {
            if (w == keep) continue;
            adj[static_cast<size_t>(w)].erase(drop);
            adj[static_cast<size_t>(w)].insert(keep);
            adj[static_cast<size_t>(keep)].insert(w);
        }
        adj[static_cast<size_t>(drop)].clear();

        pos[static_cast<size_t>(keep)] = c.placement;
        quadric[static_cast<size_t>(keep)] += quadric[static_cast<size_t>(drop)];
        alive[static_cast<size_t>(drop)] = false;
        ++version[static_cast<size_t>(keep)];
        ++version[static_cast<size_t>(drop)];
        --live;

        for (int w : adj[static_cast<size_t>(keep)]) push_edge(keep, w);
    }
    if (live > target)
        throw std::runtime_error("simplify_quadric: target " + std::to_string(target) +
                                 " unreachable by legal contractions (stopped at " +
                                 std::to_string(live) + ")");

    // assemble the coarse mesh: survivors keep their original template positions
    std::vector<int> survivors;
    survivors.reserve(static_cast<size_t>(target));
    for (int v = 0; v < n; ++v)
        if (alive[static_cast<size_t>(v)]) survivors.push_back(v);
    std::vector<int> coarse_index(static_cast<size_t>(n), -1);
    for (size_t i = 0; i < survivors.size(); ++i)
        coarse_index[static_cast<size_t>(survivors[i])] = static_cast<int>(i);

    SimplifyResult result;
    result.mesh.vertices.reserve(survivors.size());
    for (int v : survivors) result.mesh.vertices.push_back(input.vertices[static_cast<size_t>(v)]);
    for (size_t f = 0; f < faces.size(); ++f) {
        if (!face_alive[f]) continue;
        const Face& face = faces[f];
        result.mesh.faces.push_back({coarse_index[static_cast<size_t>(face[0])],
                                     coarse_index[static_cast<size_t>(face[1])],
                                     coarse_index[static_cast<size_t>(face[2])]});
    }
    validate_mesh(result.mesh);

    result.down.rows = target;
    result.down.cols = n;
    for (size_t i = 0; i < survivors.size(); ++i)
        result.down.triplets.push_back({static_cast<int>(i), survivors[i], 1.0});

    // U: survivors map back one-hot; discarded vertices get the barycentric
    // coordinates of their projection onto the nearest coarse face
    result.up.rows = n;
    result.up.cols = target;
    for (int v = 0; v < n; ++v) {
        if (coarse_index[static_cast<size_t>(v)] >= 0) {
            result.up.triplets.push_back({v, coarse_index[static_cast<size_t>(v)], 1.0});
            continue;
        }
        const Vec3& p = input.vertices[static_cast<size_t>(v)];
        double best = std::numeric_limits<double>::infinity();
        int best_face = -1;
        Vec3 best_bary = Vec3::Zero();
        for (size_t f = 0; f < result.mesh.faces.size(); ++f) {
            const Face& face = result.mesh.faces[f];
            const Vec3 bary = closest_point_barycentric(p, result.mesh.vertices[face[0]],
                                                        result.mesh.vertices[face[1]],
                                                        result.mesh.vertices[face[2]]);
            const Vec3 q = bary.x() * result.mesh.vertices[face[0]] +
                           bary.y() * result.mesh.vertices[face[1]] +
                           bary.z() * result.mesh.vertices[face[2]];
            const double d2 = (p - q).squaredNorm();
            if (d2 < best) {
                best = d2;
                best_face = static_cast<int>(f);
                best_bary = bary;
            }
        }
        const Face& face = result.mesh.faces[static_cast<size_t>(best_face)];
        Vec3 w = best_bary.cwiseMax(0.0);
        w /= w.sum();
        for (int k = 0; k < 3; ++k)
            if (w[k] != 0.0) result.up.triplets.push_back({v, face[k], w[k]});
    }
    result.down.sort_triplets();
    result.up.sort_triplets();
    result.down.validate();
    result.up.validate();
    return result;
}

// targets = vertex count per level, finest first; targets[0] must match the
// input (it is prepended when omitted).
inline MeshHierarchy build_hierarchy(const TriMesh& mesh, std::vector<int> targets) {
    validate_mesh(mesh);
    if (targets.empty()) throw std::invalid_argument("build_hierarchy: no targets");
    if (targets.front() != mesh.vertex_count())
        targets.insert(targets.begin(), mesh.vertex_count());
    for (size_t i = 1; i < targets.size(); ++i)
        if (targets[i] >= targets[i - 1])
            throw std::invalid_argument("build_hierarchy: targets must strictly decrease");

    MeshHierarchy h;
    h.levels.push_back(mesh);
    for (size_t i = 1; i < targets.size(); ++i) {
        SimplifyResult r = simplify_quadric(h.levels.back(), targets[i]);
        h.levels.push_back(std::move(r.mesh));
        h.down.push_back(std::move(r.down));
        h.up.push_back(std::move(r.up));
    }
    return h;
}

inline MeshHierarchy build_hierarchy(const TriMesh& mesh, int levels, double factor) {
    if (levels < 2) throw std::invalid_argument("build_hierarchy: need at least 2 levels");
    if (factor <= 1.0) throw std::invalid_argument("build_hierarchy: factor must exceed 1");
    std::vector<int> targets;
    double t = mesh.vertex_count();
    for (int k = 0; k < levels; ++k) {
        targets.push_back(static_cast<int>(std::ceil(t)));
        t /= factor;
    }
    return build_hierarchy(mesh, targets);
}

template <class Real>
Tensor<Real> pool(const SparseMatrix& down, const Tensor<Real>& x) {
    return spmm(down, x);
}

template <class Real>
Tensor<Real> unpool(const SparseMatrix& up, const Tensor<Real>& x) {
    return spmm(up, x);
}

inline Tensor<double> vertices_tensor(const TriMesh& m) {
    Tensor<double> t({m.vertex_count(), 3});
    for (int i = 0; i < m.vertex_count(); ++i)
        for (int k = 0; k < 3; ++k) t(i, k) = m.vertices[static_cast<size_t>(i)][k];
    return t;
}

inline std::vector<Vec3> tensor_vertices(const Tensor<double>& t) {
    std::vector<Vec3> v(static_cast<size_t>(t.dim(0)));
    for (int i = 0; i < t.dim(0); ++i) v[static_cast<size_t>(i)] = Vec3(t(i, 0), t(i, 1), t(i, 2));
    return v;
}

// ---------------------------------------------------------------------------
// JSON serialization: {"levels":[{"n_vertices","faces"}],"down":[...],"up":[...]}

namespace detail {
inline nlohmann::json triplets_json(const SparseMatrix& s) {
    nlohmann::json j;
    j["rows"] = s.rows;
    j["cols"] = s.cols;
    nlohmann::json trip = nlohmann::json::array();
    for (const auto& t : s.triplets) trip.push_back({t.row, t.col, t.value});
    j["triplets"] = std::move(trip);
    return j;
}

inline SparseMatrix triplets_from_json(const nlohmann::json& j) {
    SparseMatrix s;
    s.rows = j.at("rows").get<int>();
    s.cols = j.at("cols").get<int>();
    for (const auto& t : j.at("triplets"))
        s.triplets.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>()});
    s.validate();
    return s;
}
}  // namespace detail

inline void save_hierarchy(const MeshHierarchy& h, const std::string& path) {
    nlohmann::json j;
    j["levels"] = nlohmann::json::array();
    for (const TriMesh& m : h.levels) {
        nlohmann::json lvl;
        lvl["n_vertices"] = m.vertex_count();
        nlohmann::json faces = nlohmann::json::array();
        for (const Face& f : m.faces) faces.push_back({f[0], f[1], f[2]});
        lvl["faces"] = std::move(faces);
        j["levels"].push_back(std::move(lvl));
    }
    j["down"] = nlohmann::json::array();
    for (const SparseMatrix& s : h.down) j["down"].push_back(detail::triplets_json(s));
    j["up"] = nlohmann::json::array();
    for (const SparseMatrix& s : h.up) j["up"].push_back(detail::triplets_json(s));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_hierarchy: cannot open " + path);
    out << j.dump(0) << '\n';
}

// Level vertex positions are rebuilt from the finest mesh through the D chain.
inline MeshHierarchy load_hierarchy(const std::string& path, const TriMesh& finest) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_hierarchy: cannot open " + path);
    nlohmann::json j;
    in >> j;

    MeshHierarchy h;
    for (const auto& lvl : j.at("levels")) {
        TriMesh m;
        m.vertices.resize(lvl.at("n_vertices").get<size_t>());
        for (const auto& f : lvl.at("faces"))
            m.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
        h.levels.push_back(std::move(m));
    }
    for (const auto& s : j.at("down")) h.down.push_back(detail::triplets_from_json(s));
    for (const auto& s : j.at("up")) h.up.push_back(detail::triplets_from_json(s));

    if (h.levels.empty() || h.levels[0].vertex_count() != finest.vertex_count())
        throw std::runtime_error("load_hierarchy: finest mesh does not match " + path);
    h.levels[0].vertices = finest.vertices;
    for (size_t i = 1; i < h.levels.size(); ++i) {
        const Tensor<double> v = pool(h.down[i - 1], vertices_tensor(h.levels[i - 1]));
        h.levels[i].vertices = tensor_vertices(v);
        validate_mesh(h.levels[i]);
    }
    return h;
}

}  // namespace meshrec

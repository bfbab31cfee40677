#pragma once

// Procedural template meshes at hand scale (millimeters) plus the one-hot
// landmark regressor used by the synthetic pipeline. The 778-vertex template
// mirrors the vertex budget of the standard hand topology; geometry is a
// smoothly deformed genus-0 blob, which is all the pipeline needs.

#include <stdexcept>

#include "meshrec/hierarchy.hpp"
#include "meshrec/mesh.hpp"
#include "meshrec/sparse.hpp"

namespace meshrec {

// Canonical template depth: meshes live in the camera frame, centroid on the
// optical axis, so the decoder's initial chain projects in front of any of the
// synthetic cameras.
inline constexpr double kTemplateDepth = 600.0;  // mm

// Decimated icosphere at roughly palm size; default 48 vertices to keep desk
// tests fast.
inline TriMesh desk_template(int target = 48) {
    TriMesh sphere = icosphere(2);  // 162 vertices
    for (Vec3& v : sphere.vertices) {
        v.x() *= 80.0;
        v.y() *= 100.0;
        v.z() = v.z() * 55.0 + kTemplateDepth;
    }
    return simplify_quadric(sphere, target).mesh;
}

// 778-vertex closed template, palm-like proportions.
inline TriMesh hand_template() {
    TriMesh m = icosphere(4);  // 2562 vertices
    for (Vec3& v : m.vertices) {
        const double ripple = 1.0 + 0.10 * std::sin(3.0 * v.x()) * std::cos(2.0 * v.y());
        const double taper = 1.0 + 0.12 * std::cos(2.5 * v.y());
        Vec3 d;
        d.x() = 80.0 * v.x() * ripple;
        d.y() = 95.0 * v.y() * (1.0 + 0.08 * std::sin(3.0 * v.x()));
        d.z() = 28.0 * v.z() * taper + kTemplateDepth;
        v = d;
    }
    return simplify_quadric(m, 778).mesh;
}

// One-hot rows selecting spread-out extreme vertices (+x, -x, +y, -y, +z, ...).
inline SparseMatrix extreme_vertex_regressor(const TriMesh& mesh, int count = 5) {
    if (count < 1 || count > mesh.vertex_count())
        throw std::invalid_argument("extreme_vertex_regressor: bad landmark count");
    std::vector<Vec3> dirs = {Vec3(1, 0, 0),  Vec3(-1, 0, 0), Vec3(0, 1, 0),
                              Vec3(0, -1, 0), Vec3(0, 0, 1),  Vec3(0, 0, -1),
                              Vec3(1, 1, 0).normalized(), Vec3(-1, -1, 0).normalized()};
    std::vector<int> picked;
    for (const Vec3& d : dirs) {
        if (static_cast<int>(picked.size()) == count) break;
        int best = -1;
        double best_dot = -1e300;
        for (int v = 0; v < mesh.vertex_count(); ++v) {
            if (std::find(picked.begin(), picked.end(), v) != picked.end()) continue;
            const double dot = mesh.vertices[static_cast<size_t>(v)].dot(d);
            if (dot > best_dot) {
                best_dot = dot;
                best = v;
            }
        }
        picked.push_back(best);
    }
    if (static_cast<int>(picked.size()) < count)
        throw std::invalid_argument("extreme_vertex_regressor: too many landmarks requested");

    SparseMatrix r;
    r.rows = count;
    r.cols = mesh.vertex_count();
    for (int j = 0; j < count; ++j) r.triplets.push_back({j, picked[static_cast<size_t>(j)], 1.0});
    r.sort_triplets();
    return r;
}

}  // namespace meshrec

#include <catch2/catch_amalgamated.hpp>

using Catch::Approx;

#include <set>

#include "meshrec/spiral.hpp"

using namespace meshrec;

namespace {

// Shared row invariants: starts at the center, BFS ring index non-decreasing,
// consecutive same-ring entries edge-adjacent, distinct entries, sentinel
// suffix only.
void check_row(const TriMesh& mesh, const AdjacencyList& adj, const std::vector<int>& row,
               int center) {
    REQUIRE_FALSE(row.empty());
    REQUIRE(row[0] == center);
    const std::vector<int> dist = bfs_distances(adj, center);
    std::set<int> seen;
    bool in_padding = false;
    int prev_ring = 0;
    int prev_vertex = center;
    for (size_t i = 0; i < row.size(); ++i) {
        const int v = row[i];
        if (v < 0) {
            in_padding = true;
            continue;
        }
        REQUIRE_FALSE(in_padding);  // sentinels form a contiguous suffix
        REQUIRE(v < mesh.vertex_count());
        REQUIRE_FALSE(seen.count(v));
        seen.insert(v);
        const int ring = dist[static_cast<size_t>(v)];
        REQUIRE(ring >= prev_ring);
        if (i > 0 && ring == prev_ring && prev_vertex != center) {
            const auto& nbrs = adj[static_cast<size_t>(prev_vertex)];
            REQUIRE(std::find(nbrs.begin(), nbrs.end(), v) != nbrs.end());
        }
        prev_ring = ring;
        prev_vertex = v;
    }
}

}  // namespace

TEST_CASE("k_ring basics") {
    const TriMesh tetra = tetrahedron();
    const AdjacencyList adj = vertex_adjacency(tetra);
    REQUIRE(k_ring(adj, 1, 0) == std::set<int>{1});
    REQUIRE(k_ring(adj, 0, 1) == std::set<int>{1, 2, 3});
    REQUIRE(k_ring(adj, 0, 2).empty());
    REQUIRE_THROWS_AS(k_ring(adj, 9, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(k_ring(adj, 0, -1), std::invalid_argument);
}

TEST_CASE("spiral length one is just the center") {
    const TriMesh tetra = tetrahedron();
    const AdjacencyList adj = vertex_adjacency(tetra);
    REQUIRE(spiral_sequence(tetra, adj, 2, 1) == std::vector<int>{2});
}

TEST_CASE("tetrahedron spiral follows the face-orientation walk") {
    const TriMesh tetra = tetrahedron();
    const AdjacencyList adj = vertex_adjacency(tetra);
    const auto row = spiral_sequence(tetra, adj, 0, 4);
    REQUIRE(row.size() == 4);
    REQUIRE(row[0] == 0);
    REQUIRE(row[1] == 1);  // smallest-index neighbor starts the 1-ring
    // the walk direction is fixed by the face (0, 1, x) winding; enumerate the
    // orientation-consistent cyclic orders of the 1-ring to pin x
    int expected_next = -1;
    for (const Face& f : tetra.faces)
        for (int k = 0; k < 3; ++k)
            if (f[k] == 0 && f[(k + 1) % 3] == 1) expected_next = f[(k + 2) % 3];
    REQUIRE(expected_next >= 0);
    REQUIRE(row[2] == expected_next);
    REQUIRE(std::set<int>(row.begin(), row.end()) == std::set<int>{0, 1, 2, 3});
    check_row(tetra, adj, row, 0);
}

TEST_CASE("open fan walks boundary to boundary then pads") {
    TriMesh tri;
    tri.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    tri.faces = {{0, 1, 2}};
    const AdjacencyList adj = vertex_adjacency(tri);
    const auto row = spiral_sequence(tri, adj, 0, 5);
    REQUIRE(row == std::vector<int>{0, 1, 2, -1, -1});
}

TEST_CASE("icosahedron spirals cover the whole disk at l = 12") {
    const TriMesh ico = icosahedron();
    const AdjacencyList adj = vertex_adjacency(ico);
    for (int v = 0; v < ico.vertex_count(); ++v) {
        const auto row = spiral_sequence(ico, adj, v, 12);
        check_row(ico, adj, row, v);
        for (int x : row) REQUIRE(x >= 0);  // diameter-3 graph: disk of radius 3 is everything
        const std::set<int> disk = k_disk(adj, v, 3);
        REQUIRE(std::set<int>(row.begin(), row.end()) == disk);
    }
}

TEST_CASE("icosphere spirals satisfy the row invariants at l = 27") {
    const TriMesh m = icosphere(2);
    const AdjacencyList adj = vertex_adjacency(m);
    for (int v = 0; v < m.vertex_count(); ++v) {
        const auto row = spiral_sequence(m, adj, v, 27);
        REQUIRE(row.size() == 27);
        check_row(m, adj, row, v);
    }
}

TEST_CASE("precompute_spirals is deterministic and padded consistently") {
    const MeshHierarchy h = build_hierarchy(icosphere(1), 3, 2.0);
    const auto a = precompute_spirals(h);  // default l = 27 everywhere
    const auto b = precompute_spirals(h);
    REQUIRE(a.size() == 3);
    for (size_t s = 0; s < a.size(); ++s) {
        REQUIRE(a[s].length == 27);
        REQUIRE(a[s].rows == b[s].rows);
        const AdjacencyList adj = vertex_adjacency(h.levels[s]);
        for (int v = 0; v < h.levels[s].vertex_count(); ++v)
            check_row(h.levels[s], adj, a[s].rows[static_cast<size_t>(v)], v);
    }
}

TEST_CASE("spiral tables survive JSON round trip") {
    const MeshHierarchy h = build_hierarchy(icosahedron(), 2, 2.0);
    const auto tables = precompute_spirals(h, {9, 7});
    const std::string path =
        (std::filesystem::temp_directory_path() / "meshrec_spirals.json").string();
    save_spirals(tables, path);
    const auto back = load_spirals(path);
    REQUIRE(back.size() == tables.size());
    for (size_t s = 0; s < tables.size(); ++s) {
        REQUIRE(back[s].length == tables[s].length);
        REQUIRE(back[s].rows == tables[s].rows);
    }
}

TEST_CASE("isolated vertex is rejected") {
    TriMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(5, 5, 5)};
    m.faces = {{0, 1, 2}};
    const AdjacencyList adj = vertex_adjacency(m);
    REQUIRE_THROWS_AS(spiral_sequence(m, adj, 3, 2), std::runtime_error);
    REQUIRE(spiral_sequence(m, adj, 3, 1) == std::vector<int>{3});
}

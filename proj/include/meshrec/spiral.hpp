#pragma once

// Fixed-length spiral neighbor orderings: k-rings by BFS, ring-1 ordered by an
// orientation-consistent walk over the vertex fan, outer rings started adjacent
// to the previous ring's end. Rows shorter than the requested length are padded
// with -1; the sentinel maps to a zero feature vector at gather time.

#include <cstdint>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshrec/hierarchy.hpp"
#include "meshrec/mesh.hpp"

namespace meshrec {

struct SpiralTable {
    int length = 0;
    std::vector<std::vector<int>> rows;  // one row of `length` entries per vertex
};

inline std::vector<int> bfs_distances(const AdjacencyList& adj, int v) {
    if (v < 0 || v >= static_cast<int>(adj.size()))
        throw std::invalid_argument("bfs_distances: vertex out of range");
    std::vector<int> dist(adj.size(), -1);
    std::queue<int> q;
    dist[static_cast<size_t>(v)] = 0;
    q.push(v);
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int w : adj[static_cast<size_t>(u)])
            if (dist[static_cast<size_t>(w)] < 0) {
                dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(u)] + 1;
                q.push(w);
            }
    }
    return dist;
}

// Vertices at graph distance exactly k from v.
inline std::set<int> k_ring(const AdjacencyList& adj, int v, int k) {
    if (k < 0) throw std::invalid_argument("k_ring: negative k");
    const std::vector<int> dist = bfs_distances(adj, v);
    std::set<int> ring;
    for (size_t w = 0; w < dist.size(); ++w)
        if (dist[w] == k) ring.insert(static_cast<int>(w));
    return ring;
}

inline std::set<int> k_disk(const AdjacencyList& adj, int v, int k) {
    const std::vector<int> dist = bfs_distances(adj, v);
    std::set<int> disk;
    for (size_t w = 0; w < dist.size(); ++w)
        if (dist[w] >= 0 && dist[w] <= k) disk.insert(static_cast<int>(w));
    return disk;
}

namespace detail {

// Around vertex v, successor map over the 1-ring induced by face winding:
// a face (v, x, y) makes y follow x.
inline std::map<int, int> ring_successors(const TriMesh& mesh, int v) {
    std::map<int, int> succ;
    for (const Face& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            if (f[k] != v) continue;
            const int x = f[(k + 1) % 3], y = f[(k + 2) % 3];
            if (succ.count(x))
                throw std::runtime_error("spiral: non-manifold fan at vertex " +
                                         std::to_string(v));
            succ[x] = y;
        }
    }
    return succ;
}

// Ordered 1-ring. Interior fans start at the smallest-index neighbor; open fans
// walk from one boundary edge to the other.
inline std::vector<int> ordered_one_ring(const TriMesh& mesh, const AdjacencyList& adj, int v) {
    const std::map<int, int> succ = ring_successors(mesh, v);
    const auto& nbrs = adj[static_cast<size_t>(v)];
    if (nbrs.empty()) return {};
    std::set<int> has_pred;
    for (const auto& [a, b] : succ) has_pred.insert(b);

    int start = -1;
    bool open = false;
    for (int w : nbrs)
        if (!has_pred.count(w)) {
            if (start < 0) start = w;
            open = true;
        }
    if (!open) start = nbrs.front();  // cycle; neighbors are sorted, so this is the minimum

    std::vector<int> ring;
    std::set<int> seen;
    int cur = start;
    while (cur >= 0 && !seen.count(cur)) {
        ring.push_back(cur);
        seen.insert(cur);
        auto it = succ.find(cur);
        cur = it == succ.end() ? -1 : it->second;
    }
    if (ring.size() != nbrs.size())
        throw std::runtime_error("spiral: vertex " + std::to_string(v) +
                                 " has a disconnected fan");
    return ring;
}

}  // namespace detail

// Spiral row of length l for vertex v: [v, ordered 1-ring, ring 2, ...], each
// outer ring started adjacent to the previous ring's end and traversed along
// in-ring edges. When the walk cannot continue (exhausted or disconnected ring)
// the row is padded with -1.
inline std::vector<int> spiral_sequence(const TriMesh& mesh, const AdjacencyList& adj, int v,
                                        int length) {
    if (length < 1) throw std::invalid_argument("spiral_sequence: length must be >= 1");
    if (v < 0 || v >= mesh.vertex_count())
        throw std::invalid_argument("spiral_sequence: vertex out of range");
    std::vector<int> row;
    row.reserve(static_cast<size_t>(length));
    row.push_back(v);
    if (static_cast<int>(row.size()) == length) return row;
    if (adj[static_cast<size_t>(v)].empty())
        throw std::runtime_error("spiral_sequence: isolated vertex " + std::to_string(v));

    const std::vector<int> dist = bfs_distances(adj, v);
    std::vector<int> prev_ring = detail::ordered_one_ring(mesh, adj, v);
    std::set<int> visited{v};

    int k = 1;
    while (static_cast<int>(row.size()) < length && !prev_ring.empty()) {
        for (int w : prev_ring) {
            visited.insert(w);
            row.push_back(w);
            if (static_cast<int>(row.size()) == length) return row;
        }
        // order ring k+1: start adjacent to the previous ring's end, then follow
        // unvisited in-ring neighbors (smallest index on ties)
        ++k;
        std::set<int> ring;
        for (size_t w = 0; w < dist.size(); ++w)
            if (dist[w] == k) ring.insert(static_cast<int>(w));
        std::vector<int> ordered;
        int cur = -1;
        for (int w : adj[static_cast<size_t>(prev_ring.back())])
            if (ring.count(w) && !visited.count(w)) {
                cur = w;
                break;  // adjacency lists are sorted: smallest qualifying index
            }
        while (cur >= 0) {
            ordered.push_back(cur);
            visited.insert(cur);
            int next = -1;
            for (int w : adj[static_cast<size_t>(cur)])
                if (ring.count(w) && !visited.count(w)) {
                    next = w;
                    break;
                }
            cur = next;
        }
        prev_ring = std::move(ordered);
    }
    while (static_cast<int>(row.size()) < length) row.push_back(-1);
    return row;
}

inline SpiralTable spiral_table(const TriMesh& mesh, int length) {
    const AdjacencyList adj = vertex_adjacency(mesh);
    SpiralTable table;
    table.length = length;
    table.rows.reserve(static_cast<size_t>(mesh.vertex_count()));
    for (int v = 0; v < mesh.vertex_count(); ++v)
        table.rows.push_back(spiral_sequence(mesh, adj, v, length));
    return table;
}

// One table per hierarchy level; `lengths` may hold one value per level or a
// single value applied everywhere (default 27).
inline std::vector<SpiralTable> precompute_spirals(const MeshHierarchy& hier,
                                                   std::vector<int> lengths = {27}) {
    if (lengths.size() == 1) lengths.assign(static_cast<size_t>(hier.level_count()), lengths[0]);
    if (static_cast<int>(lengths.size()) != hier.level_count())
        throw std::invalid_argument("precompute_spirals: one length per level required");
    std::vector<SpiralTable> tables;
    for (int s = 0; s < hier.level_count(); ++s)
        tables.push_back(spiral_table(hier.levels[static_cast<size_t>(s)], lengths[static_cast<size_t>(s)]));
    return tables;
}

inline void save_spirals(const std::vector<SpiralTable>& tables, const std::string& path) {
    nlohmann::json j;
    j["levels"] = nlohmann::json::array();
    for (const SpiralTable& t : tables) {
        nlohmann::json lvl;
        lvl["l"] = t.length;
        lvl["rows"] = t.rows;
        j["levels"].push_back(std::move(lvl));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_spirals: cannot open " + path);
    out << j.dump(0) << '\n';
}

inline std::vector<SpiralTable> load_spirals(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_spirals: cannot open " + path);
    nlohmann::json j;
    in >> j;
    std::vector<SpiralTable> tables;
    for (const auto& lvl : j.at("levels")) {
        SpiralTable t;
        t.length = lvl.at("l").get<int>();
        t.rows = lvl.at("rows").get<std::vector<std::vector<int>>>();
        tables.push_back(std::move(t));
    }
    return tables;
}

}  // namespace meshrec

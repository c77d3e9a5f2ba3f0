#pragma once

#include "rsmig/skeleton_graph.hpp"

#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace rsmig::testing {

struct PlainGraph {
    int n = 0;
    std::vector<std::pair<int, int>> edges;  // caller -> callee
};

inline std::string node_id(int i) { return "crate::m" + std::to_string(i % 3) + "::f" + std::to_string(i); }

/// Random DAG: edges only go from a higher to a lower index.
inline PlainGraph random_dag(std::mt19937& rng, int max_n = 50) {
    PlainGraph g;
    g.n = 1 + static_cast<int>(rng() % max_n);
    std::bernoulli_distribution coin(std::min(0.5, 3.0 / g.n));
    std::set<std::pair<int, int>> seen;
    for (int u = 0; u < g.n; ++u)
        for (int v = 0; v < u; ++v)
            if (coin(rng) && seen.insert({u, v}).second) g.edges.push_back({u, v});
    std::shuffle(g.edges.begin(), g.edges.end(), rng);
    return g;
}

/// Random DAG plus planted cycles of length 2..5 (and the odd self loop).
inline PlainGraph random_cyclic(std::mt19937& rng, int max_n = 50) {
    PlainGraph g = random_dag(rng, max_n);
    if (g.n < 4) g.n = 4;
    int planted = 1 + static_cast<int>(rng() % 3);
    for (int c = 0; c < planted; ++c) {
        int len = 2 + static_cast<int>(rng() % 4);
        std::vector<int> members;
        for (int k = 0; k < len; ++k) members.push_back(static_cast<int>(rng() % g.n));
        for (int k = 0; k < len; ++k) g.edges.push_back({members[k], members[(k + 1) % len]});
    }
    int self = static_cast<int>(rng() % g.n);
    g.edges.push_back({self, self});
    return g;
}

inline graph::SkeletonGraph to_skeleton_graph(const PlainGraph& p) {
    graph::SkeletonGraph g;
    for (int i = 0; i < p.n; ++i) {
        graph::Node n;
        n.id = node_id(i);
        n.module = "crate::m" + std::to_string(i % 3);
        n.name = "f" + std::to_string(i);
        n.c_name = n.name;
        n.schedulable = true;
        g.add_node(n);
    }
    for (auto [u, v] : p.edges) g.add_edge(node_id(u), node_id(v), graph::EdgeKind::Call);
    return g;
}

/// Reachability by Warshall's algorithm; u and v share a component iff each
/// reaches the other.
inline std::vector<std::vector<bool>> reachability(const PlainGraph& p) {
    std::vector<std::vector<bool>> r(p.n, std::vector<bool>(p.n, false));
    for (auto [u, v] : p.edges) r[u][v] = true;
    for (int k = 0; k < p.n; ++k)
        for (int i = 0; i < p.n; ++i)
            if (r[i][k])
                for (int j = 0; j < p.n; ++j)
                    if (r[k][j]) r[i][j] = true;
    return r;
}

/// Nodes in a strongly connected component of size >= 2.
inline std::set<int> cyclic_nodes(const PlainGraph& p) {
    auto r = reachability(p);
    std::set<int> out;
    for (int i = 0; i < p.n; ++i)
        for (int j = 0; j < p.n; ++j)
            if (i != j && r[i][j] && r[j][i]) out.insert(i);
    return out;
}

struct ScheduleCheck {
    bool partition = true;
    bool ordering = true;
    bool containment = true;
    std::string detail;
    bool ok() const { return partition && ordering && containment; }
};

/// Checks a schedule against the oracle: every node in exactly one layer,
/// every acyclic edge ordered callee-first, every cycle member in the final
/// layer.
inline ScheduleCheck check_schedule(const PlainGraph& p, const graph::ScheduleLayers& s) {
    ScheduleCheck c;
    std::vector<int> layer(p.n, -1);
    for (size_t l = 0; l < s.layers.size(); ++l)
        for (const auto& id : s.layers[l]) {
            int i = std::stoi(id.substr(id.rfind("::f") + 3));
            if (layer[i] != -1) {
                c.partition = false;
                c.detail += id + " scheduled twice; ";
            }
            layer[i] = static_cast<int>(l);
        }
    for (int i = 0; i < p.n; ++i)
        if (layer[i] == -1) {
            c.partition = false;
            c.detail += node_id(i) + " unscheduled; ";
        }
    auto cyc = cyclic_nodes(p);
    int last = static_cast<int>(s.layers.size()) - 1;
    for (int i : cyc)
        if (layer[i] != last) {
            c.containment = false;
            c.detail += node_id(i) + " is a cycle member outside the final layer; ";
        }
    for (auto [u, v] : p.edges) {
        if (u == v || cyc.contains(u) || cyc.contains(v)) continue;
        if (!(layer[v] < layer[u])) {
            c.ordering = false;
            c.detail += node_id(u) + " -> " + node_id(v) + " out of order; ";
        }
    }
    return c;
}

}  // namespace rsmig::testing

#include "rsmig/skeleton_graph.hpp"

#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <functional>

namespace rsmig::graph {

using skeleton::SkeletonProject;
using skeleton::Visibility;

const char* kind_name(SymbolKind k) {
    switch (k) {
    case SymbolKind::Function: return "function";
    case SymbolKind::Type: return "type";
    case SymbolKind::Static: return "static";
    case SymbolKind::Constant: return "constant";
    case SymbolKind::Enumerator: return "enumerator";
    }
    return "?";
}

const char* kind_name(NodeKind k) {
    switch (k) {
    case NodeKind::Function: return "function";
    case NodeKind::Type: return "type";
    case NodeKind::Static: return "static";
    case NodeKind::Constant: return "constant";
    case NodeKind::Boundary: return "boundary";
    }
    return "?";
}

const char* state_name(NodeState s) {
    switch (s) {
    case NodeState::Pending: return "pending";
    case NodeState::Translated: return "translated";
    case NodeState::Failed: return "failed";
    case NodeState::Fallback: return "fallback";
    }
    return "?";
}

NodeState parse_state(std::string_view s) {
    for (auto st : {NodeState::Pending, NodeState::Translated, NodeState::Failed, NodeState::Fallback})
        if (s == state_name(st)) return st;
    throw GraphError("unknown node state `" + std::string(s) + "`");
}

namespace {

NodeKind parse_node_kind(std::string_view s) {
    for (auto k : {NodeKind::Function, NodeKind::Type, NodeKind::Static, NodeKind::Constant, NodeKind::Boundary})
        if (s == kind_name(k)) return k;
    throw GraphError("unknown node kind `" + std::string(s) + "`");
}

std::string describe(const IndexEntry& e) {
    return std::string(kind_name(e.kind)) + " `" + e.qualified_name + "`";
}

}  // namespace

// ---------------------------------------------------------------------------
// Index

void GlobalSymbolIndex::add(IndexEntry e) {
    if (auto it = entries_.find(e.qualified_name); it != entries_.end())
        throw DuplicateDefinitionError("duplicate definition of `" + e.qualified_name + "`: " + describe(it->second) +
                                       " and " + describe(e));
    if (e.kind == SymbolKind::Function && !e.internal_linkage) {
        auto [lo, hi] = by_c_name_.equal_range(e.c_name);
        for (auto it = lo; it != hi; ++it) {
            const IndexEntry& other = entries_.at(it->second);
            if (other.kind == SymbolKind::Function && !other.internal_linkage)
                throw DuplicateDefinitionError("duplicate definition of external function `" + e.c_name + "` in `" +
                                               other.module + "` and `" + e.module + "`");
        }
    }
    by_c_name_.emplace(e.c_name, e.qualified_name);
    std::string key = e.qualified_name;
    entries_.emplace(std::move(key), std::move(e));
}

const IndexEntry* GlobalSymbolIndex::find(std::string_view qualified_name) const {
    auto it = entries_.find(qualified_name);
    return it == entries_.end() ? nullptr : &it->second;
}

const IndexEntry* GlobalSymbolIndex::resolve(std::string_view c_name, std::string_view module,
                                             std::initializer_list<SymbolKind> kinds) const {
    auto [lo, hi] = by_c_name_.equal_range(c_name);
    const IndexEntry* shared = nullptr;
    const IndexEntry* external = nullptr;
    int externals = 0;
    for (auto it = lo; it != hi; ++it) {
        const IndexEntry& e = entries_.at(it->second);
        if (std::find(kinds.begin(), kinds.end(), e.kind) == kinds.end()) continue;
        if (e.module == module) return &e;
        if (e.module == "crate::shared") shared = &e;
        else if (!e.internal_linkage) {
            external = &e;
            ++externals;
        }
    }
    if (shared) return shared;
    return externals == 1 ? external : nullptr;
}

const IndexEntry* GlobalSymbolIndex::resolve_function(std::string_view c_name, std::string_view module) const {
    return resolve(c_name, module, {SymbolKind::Function});
}

const IndexEntry* GlobalSymbolIndex::resolve_value(std::string_view c_name, std::string_view module) const {
    return resolve(c_name, module, {SymbolKind::Static, SymbolKind::Constant, SymbolKind::Enumerator});
}

const IndexEntry* GlobalSymbolIndex::resolve_type(std::string_view c_name, std::string_view module) const {
    return resolve(c_name, module, {SymbolKind::Type});
}

std::vector<const IndexEntry*> GlobalSymbolIndex::by_name(std::string_view name) const {
    std::vector<const IndexEntry*> out;
    for (const auto& [q, e] : entries_)
        if (e.name == name) out.push_back(&e);
    return out;
}

GlobalSymbolIndex build_symbol_index(const SkeletonProject& p) {
    GlobalSymbolIndex index;
    auto qualify = [](const std::string& module, const std::string& name) { return module + "::" + name; };
    for (size_t i = 0; i < p.stubs.size(); ++i) {
        const auto& s = p.stubs[i];
        index.add({s.qualified_name, s.name, s.c_name, s.module, SymbolKind::Function, s.visibility,
                   s.internal_linkage, i});
    }
    for (size_t i = 0; i < p.types.size(); ++i) {
        const auto& t = p.types[i];
        index.add({qualify(t.module, t.name), t.name, t.c_name, t.module, SymbolKind::Type, Visibility::Public, false, i});
        for (const auto& e : t.enumerators) {
            std::string rust = skeleton::rust_ident(e);
            index.add({qualify(t.module, rust), rust, e, t.module, SymbolKind::Enumerator, Visibility::Public, false, i});
        }
    }
    for (size_t i = 0; i < p.statics.size(); ++i) {
        const auto& s = p.statics[i];
        Visibility v = s.emitted_text.starts_with("pub ") ? Visibility::Public : Visibility::Private;
        index.add({qualify(s.module, s.name), s.name, s.c_name, s.module, SymbolKind::Static, v, s.internal_linkage, i});
    }
    for (size_t i = 0; i < p.constants.size(); ++i) {
        const auto& c = p.constants[i];
        index.add({qualify(c.module, c.name), c.name, c.name, c.module, SymbolKind::Constant, Visibility::Public, false, i});
    }
    for (const auto& e : p.externs) index.add_boundary(e.name);
    return index;
}

// ---------------------------------------------------------------------------
// Graph

std::string boundary_id(std::string_view c_name) { return "extern::" + std::string(c_name); }

bool SkeletonGraph::add_node(Node n) {
    if (nodes_.contains(n.id)) return false;
    std::string id = n.id;
    nodes_.emplace(std::move(id), std::move(n));
    cycles_.reset();
    return true;
}

void SkeletonGraph::add_edge(const std::string& from, const std::string& to, EdgeKind kind) {
    if (!nodes_.contains(from)) throw GraphError("edge source `" + from + "` is not a node");
    if (!nodes_.contains(to)) throw GraphError("edge target `" + to + "` is not a node");
    if (!edges_.insert(Edge{from, to, kind}).second) return;
    if (kind == EdgeKind::Call) {
        out_calls_[from].push_back(to);
        in_calls_[to].push_back(from);
        cycles_.reset();
    }
}

const Node* SkeletonGraph::node(std::string_view id) const {
    auto it = nodes_.find(id);
    return it == nodes_.end() ? nullptr : &it->second;
}

void SkeletonGraph::compute_cycles() const {
    // Tarjan over schedulable call edges, iterative.
    std::vector<std::string> ids;
    for (const auto& [id, n] : nodes_)
        if (n.schedulable) ids.push_back(id);
    std::map<std::string, size_t, std::less<>> pos;
    for (size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
    std::vector<std::vector<size_t>> adj(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        auto it = out_calls_.find(ids[i]);
        if (it == out_calls_.end()) continue;
        for (const auto& t : it->second)
            if (auto p = pos.find(t); p != pos.end()) adj[i].push_back(p->second);
    }

    const size_t kUnset = static_cast<size_t>(-1);
    std::vector<size_t> index(ids.size(), kUnset), low(ids.size(), 0);
    std::vector<bool> on_stack(ids.size(), false);
    std::vector<size_t> stack;
    std::vector<std::vector<std::string>> out;
    size_t counter = 0;
    for (size_t root = 0; root < ids.size(); ++root) {
        if (index[root] != kUnset) continue;
        std::vector<std::pair<size_t, size_t>> work{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!work.empty()) {
            auto& [v, next] = work.back();
            if (next < adj[v].size()) {
                size_t w = adj[v][next++];
                if (index[w] == kUnset) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    work.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            size_t done = v;
            work.pop_back();
            if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[done]);
            if (low[done] != index[done]) continue;
            std::vector<std::string> comp;
            size_t w;
            do {
                w = stack.back();
                stack.pop_back();
                on_stack[w] = false;
                comp.push_back(ids[w]);
            } while (w != done);
            if (comp.size() >= 2) {
                std::sort(comp.begin(), comp.end());
                out.push_back(std::move(comp));
            }
        }
    }
    std::sort(out.begin(), out.end());
    cycle_of_.clear();
    for (size_t i = 0; i < out.size(); ++i)
        for (const auto& id : out[i]) cycle_of_[id] = i;
    cycles_ = std::move(out);
}

const std::vector<std::vector<std::string>>& SkeletonGraph::cycles() const {
    if (!cycles_) compute_cycles();
    return *cycles_;
}

std::vector<std::string> SkeletonGraph::dependencies(std::string_view id) const {
    cycles();
    std::vector<std::string> out;
    auto it = out_calls_.find(id);
    if (it == out_calls_.end()) return out;
    auto own = cycle_of_.find(id);
    for (const auto& t : it->second) {
        if (t == id) continue;
        const Node* n = node(t);
        if (!n || !n->schedulable) continue;
        if (own != cycle_of_.end()) {
            auto other = cycle_of_.find(t);
            if (other != cycle_of_.end() && other->second == own->second) continue;
        }
        out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> SkeletonGraph::dependents(std::string_view id) const {
    std::vector<std::string> out;
    auto it = in_calls_.find(id);
    if (it == in_calls_.end()) return out;
    for (const auto& f : it->second)
        if (const Node* n = node(f); n && n->schedulable) out.push_back(f);
    std::sort(out.begin(), out.end());
    return out;
}

void SkeletonGraph::set_state(std::string_view id, NodeState s) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw GraphError("unknown node `" + std::string(id) + "`");
    NodeState cur = it->second.state;
    if (cur == s) return;
    if (cur != NodeState::Pending || s == NodeState::Pending)
        throw GraphError("illegal state change of `" + std::string(id) + "`: " + state_name(cur) + " -> " +
                         state_name(s));
    it->second.state = s;
}

bool SkeletonGraph::unlocked(std::string_view id) const {
    for (const auto& d : dependencies(id))
        if (node(d)->state == NodeState::Pending) return false;
    return true;
}

SkeletonGraph build_graph(const SkeletonProject& p, const GlobalSymbolIndex& index) {
    SkeletonGraph g;
    for (const auto& [q, e] : index.entries()) {
        Node n;
        n.id = q;
        n.module = e.module;
        n.name = e.name;
        n.c_name = e.c_name;
        switch (e.kind) {
        case SymbolKind::Function:
            n.kind = NodeKind::Function;
            n.schedulable = p.stubs[e.slot].schedulable;
            break;
        case SymbolKind::Type: n.kind = NodeKind::Type; break;
        case SymbolKind::Static: n.kind = NodeKind::Static; break;
        case SymbolKind::Constant: n.kind = NodeKind::Constant; break;
        case SymbolKind::Enumerator: continue;  // folded into the owning type
        }
        g.add_node(std::move(n));
    }

    auto boundary = [&](const std::string& c_name) {
        std::string id = boundary_id(c_name);
        if (g.add_node(Node{id, NodeKind::Boundary, "", c_name, c_name, false, NodeState::Pending}) &&
            !index.is_boundary(c_name))
            g.notes.push_back("`" + c_name + "` is not declared in the skeleton; treated as a C boundary symbol");
        return id;
    };
    auto type_node = [&](const IndexEntry& e) {
        const auto& t = p.types[e.slot];
        return t.module + "::" + t.name;
    };

    for (const auto& s : p.stubs) {
        for (const auto& callee : s.c_calls) {
            if (const IndexEntry* e = index.resolve_function(callee, s.module)) g.add_edge(s.qualified_name, e->qualified_name, EdgeKind::Call);
            else g.add_edge(s.qualified_name, boundary(callee), EdgeKind::Call);
        }
        for (const auto& v : s.c_value_refs) {
            if (const IndexEntry* e = index.resolve_value(v, s.module)) {
                std::string target = e->kind == SymbolKind::Enumerator ? type_node(*e) : e->qualified_name;
                g.add_edge(s.qualified_name, target, EdgeKind::Reference);
                if (e->kind == SymbolKind::Static && p.statics[e->slot].rust_type.find("fn(") != std::string::npos)
                    g.notes.push_back("`" + s.qualified_name + "` uses function pointer `" + v +
                                      "`; indirect calls add no edges");
            } else if (const IndexEntry* f = index.resolve_function(v, s.module)) {
                g.add_edge(s.qualified_name, f->qualified_name, EdgeKind::Reference);
            } else {
                g.add_edge(s.qualified_name, boundary(v), EdgeKind::Reference);
            }
        }
        // Macro constants named in the original source.
        for (const auto& id : text::code_identifiers(s.c_source)) {
            const IndexEntry* e = index.resolve_value(id, s.module);
            if (e && e->kind == SymbolKind::Constant) g.add_edge(s.qualified_name, e->qualified_name, EdgeKind::Reference);
        }
        for (const auto& t : s.c_type_refs) {
            if (const IndexEntry* e = index.resolve_type(t, s.module)) g.add_edge(s.qualified_name, e->qualified_name, EdgeKind::Reference);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Scheduling

std::optional<size_t> ScheduleLayers::layer_of(std::string_view id) const {
    for (size_t i = 0; i < layers.size(); ++i)
        if (std::find(layers[i].begin(), layers[i].end(), id) != layers[i].end()) return i;
    return std::nullopt;
}

size_t ScheduleLayers::size() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
}

ScheduleLayers schedule(const SkeletonGraph& g) {
    std::set<std::string> in_cycle;
    for (const auto& c : g.cycles()) in_cycle.insert(c.begin(), c.end());

    std::map<std::string, size_t> remaining;
    std::vector<std::string> ready;
    for (const auto& [id, n] : g.nodes()) {
        if (!n.schedulable || in_cycle.contains(id)) continue;
        size_t deps = 0;
        for (const auto& d : g.dependencies(id))
            if (!in_cycle.contains(d)) ++deps;
        remaining[id] = deps;
        if (deps == 0) ready.push_back(id);
    }

    auto canonical = [&](std::vector<std::string>& layer) {
        std::sort(layer.begin(), layer.end(), [&](const std::string& a, const std::string& b) {
            const Node& x = *g.node(a);
            const Node& y = *g.node(b);
            return std::tie(x.module, x.name, x.id) < std::tie(y.module, y.name, y.id);
        });
    };

    ScheduleLayers out;
    size_t placed = 0;
    while (!ready.empty()) {
        canonical(ready);
        std::vector<std::string> next;
        for (const auto& id : ready) {
            for (const auto& caller : g.dependents(id)) {
                auto it = remaining.find(caller);
                if (it == remaining.end()) continue;
                if (--it->second == 0) next.push_back(caller);
            }
        }
        placed += ready.size();
        out.layers.push_back(std::move(ready));
        ready = std::move(next);
    }
    if (placed != remaining.size()) throw GraphError("scheduling left acyclic nodes unplaced");
    if (!in_cycle.empty()) {
        std::vector<std::string> last(in_cycle.begin(), in_cycle.end());
        canonical(last);
        out.layers.push_back(std::move(last));
        out.final_layer_cyclic = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const SkeletonGraph& g, const ScheduleLayers& layers) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& [id, n] : g.nodes())
        nodes.push_back({{"id", n.id},
                         {"kind", kind_name(n.kind)},
                         {"module", n.module},
                         {"name", n.name},
                         {"c_name", n.c_name},
                         {"schedulable", n.schedulable},
                         {"state", state_name(n.state)}});
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges())
        edges.push_back({{"from", e.from}, {"to", e.to}, {"kind", e.kind == EdgeKind::Call ? "call" : "reference"}});
    return {{"nodes", nodes},
            {"edges", edges},
            {"layers", layers.layers},
            {"final_layer_cyclic", layers.final_layer_cyclic},
            {"cycles", g.cycles()},
            {"notes", g.notes}};
}

SkeletonGraph graph_from_json(const nlohmann::json& j) {
    SkeletonGraph g;
    for (const auto& n : j.at("nodes"))
        g.add_node(Node{n.at("id"), parse_node_kind(n.at("kind").get<std::string>()), n.at("module"), n.at("name"),
                        n.at("c_name"), n.at("schedulable"), parse_state(n.at("state").get<std::string>())});
    for (const auto& e : j.at("edges"))
        g.add_edge(e.at("from"), e.at("to"), e.at("kind") == "call" ? EdgeKind::Call : EdgeKind::Reference);
    g.notes = j.value("notes", std::vector<std::string>{});
    return g;
}

ScheduleLayers layers_from_json(const nlohmann::json& j) {
    ScheduleLayers l;
    l.layers = j.at("layers").get<std::vector<std::vector<std::string>>>();
    l.final_layer_cyclic = j.value("final_layer_cyclic", false);
    return l;
}

void write_graph_json(const std::filesystem::path& path, const SkeletonGraph& graph, const ScheduleLayers& layers) {
    write_file(path, to_json(graph, layers).dump(2) + "\n");
    spdlog::debug("wrote {}", path.string());
}

}  // namespace rsmig::graph

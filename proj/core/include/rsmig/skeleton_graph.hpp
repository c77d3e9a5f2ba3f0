#pragma once

#include "rsmig/skeleton.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rsmig::graph {

enum class SymbolKind { Function, Type, Static, Constant, Enumerator };
const char* kind_name(SymbolKind k);

struct IndexEntry {
    std::string qualified_name;
    std::string name;  // Rust spelling
    std::string c_name;
    std::string module;
    SymbolKind kind = SymbolKind::Function;
    skeleton::Visibility visibility = skeleton::Visibility::Public;
    bool internal_linkage = false;
    /// Position in the matching SkeletonProject vector (stubs, types, statics,
    /// constants); for enumerators, the owning type.
    size_t slot = 0;
};

class DuplicateDefinitionError : public Error {
public:
    using Error::Error;
};

class GlobalSymbolIndex {
public:
    /// Throws DuplicateDefinitionError naming both locations.
    void add(IndexEntry e);

    const IndexEntry* find(std::string_view qualified_name) const;
    const std::map<std::string, IndexEntry, std::less<>>& entries() const { return entries_; }

    /// C name as seen from `module`: a definition in that module, then the
    /// shared layer, then a unique externally linked definition elsewhere.
    const IndexEntry* resolve_function(std::string_view c_name, std::string_view module) const;
    const IndexEntry* resolve_value(std::string_view c_name, std::string_view module) const;
    const IndexEntry* resolve_type(std::string_view c_name, std::string_view module) const;

    /// Every entry whose Rust name is `name`, in qualified-name order.
    std::vector<const IndexEntry*> by_name(std::string_view name) const;

    /// Declared in the skeleton's extern block (stays in C).
    bool is_boundary(std::string_view c_name) const { return boundary_.contains(std::string(c_name)); }
    void add_boundary(std::string c_name) { boundary_.insert(std::move(c_name)); }

private:
    const IndexEntry* resolve(std::string_view c_name, std::string_view module,
                              std::initializer_list<SymbolKind> kinds) const;

    std::map<std::string, IndexEntry, std::less<>> entries_;
    std::multimap<std::string, std::string, std::less<>> by_c_name_;
    std::set<std::string> boundary_;
};

GlobalSymbolIndex build_symbol_index(const skeleton::SkeletonProject& project);

// ---------------------------------------------------------------------------
// Graph

enum class NodeKind { Function, Type, Static, Constant, Boundary };
enum class NodeState { Pending, Translated, Failed, Fallback };
enum class EdgeKind { Call, Reference };

const char* kind_name(NodeKind k);
const char* state_name(NodeState s);
NodeState parse_state(std::string_view s);

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Function;
    std::string module;
    std::string name;
    std::string c_name;
    /// Only non-variadic function stubs are translated.
    bool schedulable = false;
    NodeState state = NodeState::Pending;
};

struct Edge {
    std::string from;
    std::string to;
    EdgeKind kind = EdgeKind::Call;

    auto operator<=>(const Edge&) const = default;
};

class GraphError : public Error {
public:
    using Error::Error;
};

class SkeletonGraph {
public:
    /// Returns false (and keeps the existing node) when the id is taken.
    bool add_node(Node n);
    /// Both endpoints must exist. Duplicate edges are ignored.
    void add_edge(const std::string& from, const std::string& to, EdgeKind kind);

    const Node* node(std::string_view id) const;
    const std::map<std::string, Node, std::less<>>& nodes() const { return nodes_; }
    const std::set<Edge>& edges() const { return edges_; }

    /// Schedulable callees that order translation: call edges to schedulable
    /// functions, minus self-recursion and members of the caller's own cycle.
    std::vector<std::string> dependencies(std::string_view id) const;
    /// Schedulable callers of `id` over call edges.
    std::vector<std::string> dependents(std::string_view id) const;

    /// Strongly connected components of size >= 2 over schedulable call edges,
    /// each sorted, ordered by first member.
    const std::vector<std::vector<std::string>>& cycles() const;

    /// Only pending -> {translated, failed, fallback}; setting the current
    /// state again is a no-op.
    void set_state(std::string_view id, NodeState s);
    /// Every dependency has left the pending state.
    bool unlocked(std::string_view id) const;

    std::vector<std::string> notes;

private:
    void compute_cycles() const;

    std::map<std::string, Node, std::less<>> nodes_;
    std::set<Edge> edges_;
    std::map<std::string, std::vector<std::string>, std::less<>> out_calls_;
    std::map<std::string, std::vector<std::string>, std::less<>> in_calls_;
    mutable std::optional<std::vector<std::vector<std::string>>> cycles_;
    mutable std::map<std::string, size_t, std::less<>> cycle_of_;
};

/// Node id of a C symbol that stays in C.
std::string boundary_id(std::string_view c_name);

SkeletonGraph build_graph(const skeleton::SkeletonProject& project, const GlobalSymbolIndex& index);

// ---------------------------------------------------------------------------
// Scheduling

struct ScheduleLayers {
    std::vector<std::vector<std::string>> layers;
    /// The last layer holds the members of call cycles.
    bool final_layer_cyclic = false;

    /// Index of the layer holding `id`, if scheduled.
    std::optional<size_t> layer_of(std::string_view id) const;
    size_t size() const;
};

ScheduleLayers schedule(const SkeletonGraph& graph);

nlohmann::json to_json(const SkeletonGraph& graph, const ScheduleLayers& layers);
SkeletonGraph graph_from_json(const nlohmann::json& j);
ScheduleLayers layers_from_json(const nlohmann::json& j);

/// `graph.json` with nodes, edges, layers and states.
void write_graph_json(const std::filesystem::path& path, const SkeletonGraph& graph, const ScheduleLayers& layers);

}  // namespace rsmig::graph

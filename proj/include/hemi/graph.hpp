#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hemi {

using node_index = std::uint32_t;
using type_id = std::size_t;
using relation_id = std::size_t;

struct node_type {
    std::string name;
    std::size_t count = 0;
};

struct relation {
    std::string name;
    type_id src_type = 0;
    type_id dst_type = 0;
};

struct edge {
    node_index src = 0;
    node_index dst = 0;

    friend bool operator==(const edge&, const edge&) = default;
    friend auto operator<=>(const edge&, const edge&) = default;
};

/// Typed node sets plus typed directed edge lists, one list per relation.
///
/// Node indices are dense per type. Edges are checked against the relation
/// signature on insertion and duplicates within a relation are dropped.
class hetero_graph {
public:
    type_id add_node_type(std::string name, std::size_t count);
    relation_id add_relation(std::string name, type_id src, type_id dst);

    /// Returns false when the (src, dst) pair was already present.
    bool add_edge(relation_id rel, node_index src, node_index dst);

    void set_target_type(type_id t);
    type_id target_type() const;
    std::size_t target_count() const { return node_types_.at(target_type()).count; }

    const std::vector<node_type>& node_types() const { return node_types_; }
    const std::vector<relation>& relations() const { return relations_; }
    const std::vector<edge>& edges(relation_id rel) const { return edges_.at(rel); }
    std::size_t edge_count() const;

    std::optional<type_id> find_type(std::string_view name) const;
    std::optional<relation_id> find_relation(std::string_view name) const;

    /// Throws data_error unless |types| + |relations| > 2 and a target type is set.
    void check_well_formed() const;

    friend bool operator==(const hetero_graph& a, const hetero_graph& b);

private:
    std::vector<node_type> node_types_;
    std::vector<relation> relations_;
    std::vector<std::vector<edge>> edges_;
    std::vector<std::unordered_set<std::uint64_t>> edge_keys_;
    std::optional<type_id> target_;
};

struct metapath_step {
    relation_id rel = 0;
    bool reverse = false;

    friend bool operator==(const metapath_step&, const metapath_step&) = default;
};

struct metapath_spec {
    std::string name;
    std::vector<metapath_step> steps;
};

/// Parses `rel1.~rel2...`; `~` marks reverse orientation. Unknown relation
/// names raise data_error. Does not type-check (see validate_metapath).
metapath_spec parse_metapath(const hetero_graph& graph, std::string_view text);

/// Reversed traversal: steps in opposite order with flipped orientation.
metapath_spec reversed(const metapath_spec& spec);

/// Throws metapath_type_error naming the first non-composable adjacent pair,
/// or the endpoint whose type differs from the target type.
void validate_metapath(const hetero_graph& graph, const metapath_spec& spec);

/// Binary symmetric adjacency over the target nodes, stored as sorted
/// neighbor lists. Diagonal entries are kept when present.
class metapath_graph {
public:
    metapath_graph() = default;
    metapath_graph(metapath_spec spec, std::vector<std::vector<node_index>> rows);

    /// Builds a symmetric adjacency from an undirected edge list.
    static metapath_graph from_edges(metapath_spec spec, std::size_t n,
                                     const std::vector<edge>& edges);

    const metapath_spec& spec() const { return spec_; }
    std::size_t size() const { return rows_.size(); }
    const std::vector<node_index>& row(node_index v) const { return rows_.at(v); }
    bool has_edge(node_index v, node_index u) const;

    /// Off-diagonal edges with src < dst.
    std::vector<edge> undirected_edges() const;
    std::size_t nonzeros() const;

    std::vector<std::vector<std::uint8_t>> to_dense() const;

private:
    metapath_spec spec_;
    std::vector<std::vector<node_index>> rows_;
};

/// Boolean reachability along the oriented relation sequence, symmetrized by
/// union with the transpose. Validates the spec first.
metapath_graph compose_metapath(const hetero_graph& graph, const metapath_spec& spec);

/// {u : adjacency(v,u)} plus v itself, sorted. Throws std::out_of_range.
std::vector<node_index> metapath_neighbors(const metapath_graph& mpg, node_index v);

}  // namespace hemi

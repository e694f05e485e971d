#include "hemi/graph.hpp"

#include "hemi/error.hpp"

#include <algorithm>
#include <stdexcept>

namespace hemi {

namespace {

std::uint64_t edge_key(node_index src, node_index dst) {
    return (static_cast<std::uint64_t>(src) << 32) | dst;
}

// Oriented endpoint types of one step.
std::pair<type_id, type_id> oriented(const relation& r, bool reverse) {
    return reverse ? std::pair{r.dst_type, r.src_type} : std::pair{r.src_type, r.dst_type};
}

}  // namespace

type_id hetero_graph::add_node_type(std::string name, std::size_t count) {
    if (find_type(name)) {
        throw data_error("duplicate node type '" + name + "'");
    }
    node_types_.push_back({std::move(name), count});
    return node_types_.size() - 1;
}

relation_id hetero_graph::add_relation(std::string name, type_id src, type_id dst) {
    if (src >= node_types_.size() || dst >= node_types_.size()) {
        throw data_error("relation '" + name + "' references an unknown node type");
    }
    if (find_relation(name)) {
        throw data_error("duplicate relation '" + name + "'");
    }
    relations_.push_back({std::move(name), src, dst});
    edges_.emplace_back();
    edge_keys_.emplace_back();
    return relations_.size() - 1;
}

bool hetero_graph::add_edge(relation_id rel, node_index src, node_index dst) {
    const relation& r = relations_.at(rel);
    if (src >= node_types_[r.src_type].count || dst >= node_types_[r.dst_type].count) {
        throw data_error("edge (" + std::to_string(src) + ", " + std::to_string(dst) +
                         ") out of range for relation '" + r.name + "'");
    }
    if (!edge_keys_[rel].insert(edge_key(src, dst)).second) {
        return false;
    }
    edges_[rel].push_back({src, dst});
    return true;
}

void hetero_graph::set_target_type(type_id t) {
    if (t >= node_types_.size()) {
        throw data_error("target type index out of range");
    }
    target_ = t;
}

type_id hetero_graph::target_type() const {
    if (!target_) {
        throw data_error("target node type not set");
    }
    return *target_;
}

std::size_t hetero_graph::edge_count() const {
    std::size_t total = 0;
    for (const auto& list : edges_) {
        total += list.size();
    }
    return total;
}

std::optional<type_id> hetero_graph::find_type(std::string_view name) const {
    for (std::size_t i = 0; i < node_types_.size(); ++i) {
        if (node_types_[i].name == name) return i;
    }
    return std::nullopt;
}

std::optional<relation_id> hetero_graph::find_relation(std::string_view name) const {
    for (std::size_t i = 0; i < relations_.size(); ++i) {
        if (relations_[i].name == name) return i;
    }
    return std::nullopt;
}

void hetero_graph::check_well_formed() const {
    if (node_types_.size() + relations_.size() <= 2) {
        throw data_error("heterogeneous graph needs more than 2 node and relation types in total, got " +
                         std::to_string(node_types_.size() + relations_.size()));
    }
    (void)target_type();
}

bool operator==(const hetero_graph& a, const hetero_graph& b) {
    if (a.target_ != b.target_ || a.node_types_.size() != b.node_types_.size() ||
        a.relations_.size() != b.relations_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.node_types_.size(); ++i) {
        if (a.node_types_[i].name != b.node_types_[i].name ||
            a.node_types_[i].count != b.node_types_[i].count) {
            return false;
        }
    }
    for (std::size_t r = 0; r < a.relations_.size(); ++r) {
        const auto& ra = a.relations_[r];
        const auto& rb = b.relations_[r];
        if (ra.name != rb.name || ra.src_type != rb.src_type || ra.dst_type != rb.dst_type) {
            return false;
        }
        auto ea = a.edges_[r];
        auto eb = b.edges_[r];
        std::sort(ea.begin(), ea.end());
        std::sort(eb.begin(), eb.end());
        if (ea != eb) return false;
    }
    return true;
}

metapath_spec parse_metapath(const hetero_graph& graph, std::string_view text) {
    metapath_spec spec;
    spec.name = std::string(text);
    if (text.empty()) {
        throw data_error("empty meta-path");
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t dot = text.find('.', start);
        if (dot == std::string_view::npos) dot = text.size();
        std::string_view token = text.substr(start, dot - start);
        bool reverse = false;
        if (!token.empty() && token.front() == '~') {
            reverse = true;
            token.remove_prefix(1);
        }
        if (token.empty()) {
            throw data_error("meta-path '" + spec.name + "' has an empty relation name");
        }
        auto rel = graph.find_relation(token);
        if (!rel) {
            throw data_error("meta-path '" + spec.name + "' references unknown relation '" +
                             std::string(token) + "'");
        }
        spec.steps.push_back({*rel, reverse});
        start = dot + 1;
    }
    return spec;
}

metapath_spec reversed(const metapath_spec& spec) {
    metapath_spec out;
    out.name = spec.name + "^-1";
    for (auto it = spec.steps.rbegin(); it != spec.steps.rend(); ++it) {
        out.steps.push_back({it->rel, !it->reverse});
    }
    return out;
}

void validate_metapath(const hetero_graph& graph, const metapath_spec& spec) {
    if (spec.steps.empty()) {
        throw metapath_type_error(0, "meta-path '" + spec.name + "' has no relations");
    }
    const auto& types = graph.node_types();
    const auto& rels = graph.relations();
    for (const auto& step : spec.steps) {
        if (step.rel >= rels.size()) {
            throw data_error("meta-path '" + spec.name + "' references an unknown relation id");
        }
    }
    const type_id target = graph.target_type();
    auto [first_src, first_dst] = oriented(rels[spec.steps.front().rel], spec.steps.front().reverse);
    if (first_src != target) {
        throw metapath_type_error(0, "meta-path '" + spec.name + "' starts at type '" +
                                         types[first_src].name + "', expected target type '" +
                                         types[target].name + "'");
    }
    for (std::size_t i = 0; i + 1 < spec.steps.size(); ++i) {
        auto [src_i, dst_i] = oriented(rels[spec.steps[i].rel], spec.steps[i].reverse);
        auto [src_n, dst_n] = oriented(rels[spec.steps[i + 1].rel], spec.steps[i + 1].reverse);
        (void)src_i;
        (void)dst_n;
        if (dst_i != src_n) {
            throw metapath_type_error(
                i + 1, "meta-path '" + spec.name + "': relation " + std::to_string(i) + " ends at '" +
                           types[dst_i].name + "' but relation " + std::to_string(i + 1) +
                           " starts at '" + types[src_n].name + "'");
        }
    }
    auto [last_src, last_dst] = oriented(rels[spec.steps.back().rel], spec.steps.back().reverse);
    (void)last_src;
    if (last_dst != target) {
        throw metapath_type_error(spec.steps.size() - 1,
                                  "meta-path '" + spec.name + "' ends at type '" +
                                      types[last_dst].name + "', expected target type '" +
                                      types[target].name + "'");
    }
}

metapath_graph::metapath_graph(metapath_spec spec, std::vector<std::vector<node_index>> rows)
    : spec_(std::move(spec)), rows_(std::move(rows)) {
    for (auto& r : rows_) {
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
    }
}

metapath_graph metapath_graph::from_edges(metapath_spec spec, std::size_t n,
                                          const std::vector<edge>& edges) {
    std::vector<std::vector<node_index>> rows(n);
    for (const auto& e : edges) {
        if (e.src >= n || e.dst >= n) {
            throw data_error("edge endpoint out of range for meta-path graph");
        }
        rows[e.src].push_back(e.dst);
        rows[e.dst].push_back(e.src);
    }
    return metapath_graph(std::move(spec), std::move(rows));
}

bool metapath_graph::has_edge(node_index v, node_index u) const {
    const auto& r = rows_.at(v);
    return std::binary_search(r.begin(), r.end(), u);
}

std::vector<edge> metapath_graph::undirected_edges() const {
    std::vector<edge> out;
    for (node_index v = 0; v < rows_.size(); ++v) {
        for (node_index u : rows_[v]) {
            if (v < u) out.push_back({v, u});
        }
    }
    return out;
}

std::size_t metapath_graph::nonzeros() const {
    std::size_t total = 0;
    for (const auto& r : rows_) total += r.size();
    return total;
}

std::vector<std::vector<std::uint8_t>> metapath_graph::to_dense() const {
    std::vector<std::vector<std::uint8_t>> dense(rows_.size(), std::vector<std::uint8_t>(rows_.size(), 0));
    for (std::size_t v = 0; v < rows_.size(); ++v) {
        for (node_index u : rows_[v]) dense[v][u] = 1;
    }
    return dense;
}

metapath_graph compose_metapath(const hetero_graph& graph, const metapath_spec& spec) {
    validate_metapath(graph, spec);
    const auto& types = graph.node_types();
    const auto& rels = graph.relations();

    // Oriented adjacency lists per step.
    std::vector<std::vector<std::vector<node_index>>> step_adj;
    step_adj.reserve(spec.steps.size());
    for (const auto& step : spec.steps) {
        const relation& r = rels[step.rel];
        auto [src_t, dst_t] = oriented(r, step.reverse);
        (void)dst_t;
        std::vector<std::vector<node_index>> adj(types[src_t].count);
        for (const auto& e : graph.edges(step.rel)) {
            if (step.reverse) {
                adj[e.dst].push_back(e.src);
            } else {
                adj[e.src].push_back(e.dst);
            }
        }
        step_adj.push_back(std::move(adj));
    }

    const std::size_t n = graph.target_count();
    std::vector<std::vector<node_index>> rows(n);

    // Frontier expansion per source node; one mark array per node type.
    std::vector<std::vector<std::uint8_t>> marks(types.size());
    for (std::size_t t = 0; t < types.size(); ++t) marks[t].assign(types[t].count, 0);

    std::vector<node_index> frontier;
    std::vector<node_index> next;
    for (node_index v = 0; v < n; ++v) {
        frontier.assign(1, v);
        for (std::size_t s = 0; s < spec.steps.size(); ++s) {
            const auto [src_t, dst_t] = oriented(rels[spec.steps[s].rel], spec.steps[s].reverse);
            (void)src_t;
            auto& mark = marks[dst_t];
            next.clear();
            for (node_index x : frontier) {
                for (node_index y : step_adj[s][x]) {
                    if (!mark[y]) {
                        mark[y] = 1;
                        next.push_back(y);
                    }
                }
            }
            for (node_index y : next) mark[y] = 0;
            std::swap(frontier, next);
            if (frontier.empty()) break;
        }
        for (node_index u : frontier) {
            rows[v].push_back(u);
            if (u != v) rows[u].push_back(v);
        }
    }
    return metapath_graph(spec, std::move(rows));
}

std::vector<node_index> metapath_neighbors(const metapath_graph& mpg, node_index v) {
    if (v >= mpg.size()) {
        throw std::out_of_range("node index " + std::to_string(v) + " out of range for meta-path graph of size " +
                                std::to_string(mpg.size()));
    }
    std::vector<node_index> out = mpg.row(v);
    auto it = std::lower_bound(out.begin(), out.end(), v);
    if (it == out.end() || *it != v) out.insert(it, v);
    return out;
}

}  // namespace hemi

#pragma once

#include "hemi/autodiff.hpp"
#include "hemi/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace hemi::testing {

/// Norm-relative error between the analytic gradient of `param` and central
/// differences of `loss_fn` with step h. Groups whose gradients are both
/// below `zero` in norm count as matching.
inline double gradient_error(const std::function<var()>& loss_fn, var param, double h = 1e-5,
                             double zero = 1e-9) {
    param.zero_grad();
    var loss = loss_fn();
    backward(loss);
    const tensor analytic = param.grad().empty() ? tensor(param.shape(), 0.0) : param.grad();
    tensor numeric(param.shape(), 0.0);
    auto values = param.value().values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = loss_fn().item();
        values[i] = saved - h;
        const double down = loss_fn().item();
        values[i] = saved;
        numeric.values()[i] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        diff += std::pow(analytic.values()[i] - numeric.values()[i], 2);
        na += std::pow(analytic.values()[i], 2);
        nn += std::pow(numeric.values()[i], 2);
    }
    diff = std::sqrt(diff);
    na = std::sqrt(na);
    nn = std::sqrt(nn);
    if (na < zero && nn < zero) return 0.0;
    return diff / std::max(na, nn);
}

inline tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    tensor t = tensor::matrix(r, c);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

/// Dense 0/1 adjacency from enumerating every instance of the oriented
/// relation sequence by brute force, then symmetrizing.
inline std::vector<std::vector<std::uint8_t>> enumerate_metapath(const hetero_graph& g, const metapath_spec& spec) {
    const std::size_t n = g.target_count();
    std::vector<std::vector<std::uint8_t>> adj(n, std::vector<std::uint8_t>(n, 0));
    std::function<void(std::size_t, std::size_t, node_index)> walk = [&](std::size_t start, std::size_t step,
                                                                         node_index at) {
        if (step == spec.steps.size()) {
            adj[start][at] = 1;
            adj[at][start] = 1;
            return;
        }
        const auto& s = spec.steps[step];
        for (const edge& e : g.edges(s.rel)) {
            const node_index from = s.reverse ? e.dst : e.src;
            const node_index to = s.reverse ? e.src : e.dst;
            if (from == at) walk(start, step + 1, to);
        }
    };
    for (std::size_t v = 0; v < n; ++v) walk(v, 0, static_cast<node_index>(v));
    return adj;
}

struct random_instance {
    hetero_graph graph;
    metapath_spec spec;
};

/// Random typed graph (up to `max_nodes` per type) and a type-valid meta-path
/// of 1..max_len steps from and to the target type.
inline random_instance random_typed_instance(std::mt19937_64& rng, std::size_t max_nodes = 30,
                                             std::size_t max_len = 4) {
    auto uniform = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    for (;;) {
        random_instance inst;
        hetero_graph& g = inst.graph;
        const std::size_t types = uniform(2, 4);
        for (std::size_t t = 0; t < types; ++t) g.add_node_type("t" + std::to_string(t), uniform(1, max_nodes));
        const std::size_t rels = uniform(1, 5);
        for (std::size_t r = 0; r < rels; ++r) {
            const type_id s = uniform(0, types - 1);
            const type_id d = uniform(0, types - 1);
            g.add_relation("r" + std::to_string(r), s, d);
            const double density = std::uniform_real_distribution<double>(0.0, 0.25)(rng);
            for (std::size_t a = 0; a < g.node_types()[s].count; ++a)
                for (std::size_t b = 0; b < g.node_types()[d].count; ++b)
                    if (std::bernoulli_distribution(density)(rng))
                        g.add_edge(r, static_cast<node_index>(a), static_cast<node_index>(b));
        }
        const type_id target = uniform(0, types - 1);
        g.set_target_type(target);
        if (types + rels <= 2) continue;

        const std::size_t len = uniform(1, max_len);
        type_id at = target;
        metapath_spec spec;
        spec.name = "random";
        bool stuck = false;
        for (std::size_t i = 0; i < len && !stuck; ++i) {
            std::vector<metapath_step> options;
            for (std::size_t r = 0; r < rels; ++r) {
                if (g.relations()[r].src_type == at) options.push_back({r, false});
                if (g.relations()[r].dst_type == at) options.push_back({r, true});
            }
            if (options.empty()) {
                stuck = true;
                break;
            }
            const metapath_step step = options[uniform(0, options.size() - 1)];
            spec.steps.push_back(step);
            const relation& rel = g.relations()[step.rel];
            at = step.reverse ? rel.src_type : rel.dst_type;
        }
        if (stuck || at != target) continue;
        inst.spec = spec;
        return inst;
    }
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class temp_dir {
public:
    explicit temp_dir(const std::string& tag) {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() / ("hemi_" + tag + "_" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    temp_dir(const temp_dir&) = delete;
    temp_dir& operator=(const temp_dir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace hemi::testing

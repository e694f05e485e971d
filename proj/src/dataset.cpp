#include "hemi/dataset.hpp"

#include "hemi/error.hpp"
#include "hemi/kv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

namespace hemi {

namespace {

struct node_ref {
    type_id type = 0;
    node_index index = 0;
};

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path.string());
    return out;
}

[[noreturn]] void fail(const std::filesystem::path& file, std::size_t line, const std::string& what) {
    throw data_error(file.filename().string() + ":" + std::to_string(line) + ": " + what);
}

bool all_integers(const std::vector<std::string>& values) {
    return std::all_of(values.begin(), values.end(), [](const std::string& s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    });
}

}  // namespace

std::vector<std::size_t> dataset::full_labels() const {
    if (!has_labels()) throw data_error("dataset has no labels");
    for (std::size_t v = 0; v < labels.size(); ++v) {
        if (labels[v] == unlabeled) throw data_error("target node '" + node_ids[graph.target_type()][v] + "' has no label");
    }
    return labels;
}

dataset ingest(const dataset_paths& paths) {
    dataset data;
    std::unordered_map<std::string, node_ref> ids;
    std::vector<std::size_t> counts;
    std::vector<std::string> type_names;

    {
        auto in = open_input(paths.nodes);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const auto f = split_tabs(line);
            if (f.size() != 2 || f[0].empty() || f[1].empty()) fail(paths.nodes, lineno, "expected node_id<TAB>type");
            auto it = std::find(type_names.begin(), type_names.end(), f[1]);
            type_id t = static_cast<type_id>(it - type_names.begin());
            if (it == type_names.end()) {
                type_names.push_back(f[1]);
                counts.push_back(0);
                data.node_ids.emplace_back();
            }
            if (!ids.emplace(f[0], node_ref{t, static_cast<node_index>(counts[t])}).second) {
                fail(paths.nodes, lineno, "duplicate node id '" + f[0] + "'");
            }
            ++counts[t];
            data.node_ids[t].push_back(f[0]);
        }
    }
    for (std::size_t t = 0; t < type_names.size(); ++t) data.graph.add_node_type(type_names[t], counts[t]);

    {
        auto in = open_input(paths.relations);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const auto f = split_tabs(line);
            if (f.size() != 3) fail(paths.relations, lineno, "expected relation<TAB>src_type<TAB>dst_type");
            auto src = data.graph.find_type(f[1]);
            auto dst = data.graph.find_type(f[2]);
            if (!src) fail(paths.relations, lineno, "unknown node type '" + f[1] + "'");
            if (!dst) fail(paths.relations, lineno, "unknown node type '" + f[2] + "'");
            if (data.graph.find_relation(f[0])) fail(paths.relations, lineno, "duplicate relation '" + f[0] + "'");
            data.graph.add_relation(f[0], *src, *dst);
        }
    }

    {
        auto in = open_input(paths.edges);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const auto f = split_tabs(line);
            if (f.size() != 3) fail(paths.edges, lineno, "expected src<TAB>relation<TAB>dst");
            auto rel = data.graph.find_relation(f[1]);
            if (!rel) fail(paths.edges, lineno, "unknown relation '" + f[1] + "'");
            auto src = ids.find(f[0]);
            auto dst = ids.find(f[2]);
            if (src == ids.end()) fail(paths.edges, lineno, "unknown node id '" + f[0] + "'");
            if (dst == ids.end()) fail(paths.edges, lineno, "unknown node id '" + f[2] + "'");
            const relation& r = data.graph.relations()[*rel];
            if (src->second.type != r.src_type || dst->second.type != r.dst_type) {
                fail(paths.edges, lineno, "edge does not match the signature of relation '" + r.name + "'");
            }
            data.graph.add_edge(*rel, src->second.index, dst->second.index);
        }
    }

    auto target = data.graph.find_type(paths.target_type);
    if (!target) throw data_error("unknown target type '" + paths.target_type + "'");
    data.graph.set_target_type(*target);
    data.graph.check_well_formed();
    const std::size_t n = data.graph.target_count();

    // Features: given rows for target nodes, one-hot identity columns for the rest.
    std::vector<std::vector<double>> rows(n);
    std::size_t width = 0;
    bool have_width = false;
    if (!paths.features.empty()) {
        auto in = open_input(paths.features);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const auto f = split_tabs(line);
            auto it = ids.find(f[0]);
            if (it == ids.end()) fail(paths.features, lineno, "unknown node id '" + f[0] + "'");
            if (f.size() < 2) fail(paths.features, lineno, "feature row has no values");
            if (!have_width) {
                width = f.size() - 1;
                have_width = true;
            } else if (f.size() - 1 != width) {
                fail(paths.features, lineno,
                     "ragged feature row: " + std::to_string(f.size() - 1) + " values, expected " +
                         std::to_string(width));
            }
            if (it->second.type != *target) continue;
            std::vector<double> values;
            for (std::size_t k = 1; k < f.size(); ++k) {
                try {
                    values.push_back(parse_double(f[k], "feature"));
                } catch (const usage_error&) {
                    fail(paths.features, lineno, "bad feature value '" + f[k] + "'");
                }
            }
            rows[it->second.index] = std::move(values);
        }
    }
    std::vector<std::size_t> missing;
    for (std::size_t v = 0; v < n; ++v)
        if (rows[v].empty()) missing.push_back(v);
    if (missing.size() == n) {
        data.features = tensor::identity(n);
        data.identity_features = true;
    } else {
        const std::size_t extra = missing.empty() ? 0 : n;
        data.features = tensor::matrix(n, width + extra);
        for (std::size_t v = 0; v < n; ++v) {
            if (rows[v].empty()) {
                data.features(v, width + v) = 1.0;
            } else {
                for (std::size_t k = 0; k < width; ++k) data.features(v, k) = rows[v][k];
            }
        }
    }

    if (!paths.labels.empty()) {
        auto in = open_input(paths.labels);
        std::string line;
        std::size_t lineno = 0;
        std::vector<std::pair<node_index, std::string>> raw;
        std::vector<std::string> names;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const auto f = split_tabs(line);
            if (f.size() != 2) fail(paths.labels, lineno, "expected node_id<TAB>label");
            auto it = ids.find(f[0]);
            if (it == ids.end()) fail(paths.labels, lineno, "unknown node id '" + f[0] + "'");
            if (it->second.type != *target) fail(paths.labels, lineno, "label on a non-target node '" + f[0] + "'");
            raw.emplace_back(it->second.index, f[1]);
            names.push_back(f[1]);
        }
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        if (all_integers(names)) {
            std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
                return a.size() != b.size() ? a.size() < b.size() : a < b;
            });
        }
        data.class_names = names;
        data.labels.assign(n, unlabeled);
        for (const auto& [v, name] : raw) {
            data.labels[v] = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
        }
    }
    return data;
}

dataset_paths write_dataset(const dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    dataset_paths paths;
    paths.nodes = dir / "nodes.tsv";
    paths.relations = dir / "relations.tsv";
    paths.edges = dir / "edges.tsv";
    paths.target_type = data.graph.node_types()[data.graph.target_type()].name;

    const auto& types = data.graph.node_types();
    {
        auto out = open_output(paths.nodes);
        for (std::size_t t = 0; t < types.size(); ++t)
            for (const auto& id : data.node_ids[t]) out << id << '\t' << types[t].name << '\n';
    }
    {
        auto out = open_output(paths.relations);
        for (const auto& r : data.graph.relations())
            out << r.name << '\t' << types[r.src_type].name << '\t' << types[r.dst_type].name << '\n';
    }
    {
        auto out = open_output(paths.edges);
        const auto& rels = data.graph.relations();
        for (std::size_t r = 0; r < rels.size(); ++r) {
            for (const auto& e : data.graph.edges(r)) {
                out << data.node_ids[rels[r].src_type][e.src] << '\t' << rels[r].name << '\t'
                    << data.node_ids[rels[r].dst_type][e.dst] << '\n';
            }
        }
    }
    const type_id target = data.graph.target_type();
    if (!data.identity_features) {
        paths.features = dir / "features.tsv";
        auto out = open_output(paths.features);
        for (std::size_t v = 0; v < data.features.rows(); ++v) {
            out << data.node_ids[target][v];
            for (std::size_t k = 0; k < data.features.cols(); ++k) out << '\t' << format_double(data.features(v, k));
            out << '\n';
        }
    }
    if (data.has_labels()) {
        paths.labels = dir / "labels.tsv";
        auto out = open_output(paths.labels);
        for (std::size_t v = 0; v < data.labels.size(); ++v) {
            if (data.labels[v] != unlabeled) out << data.node_ids[target][v] << '\t' << data.class_names[data.labels[v]] << '\n';
        }
    }
    return paths;
}

void synthetic_spec::validate() const {
    if (blocks == 0 || papers_per_block == 0 || authors_per_block == 0 || subjects_per_block == 0) {
        throw usage_error("synthetic spec needs at least one block and one node of each type per block");
    }
    for (double p : {pa_intra, pa_inter, ps_intra, ps_inter}) {
        if (!(p >= 0.0 && p <= 1.0)) throw usage_error("synthetic edge probabilities must lie in [0, 1]");
    }
    if (!std::isfinite(feature_signal)) throw usage_error("feature_signal must be finite");
}

dataset generate_synthetic(const synthetic_spec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    dataset data;
    const std::size_t papers = spec.blocks * spec.papers_per_block;
    const std::size_t authors = spec.blocks * spec.authors_per_block;
    const std::size_t subjects = spec.blocks * spec.subjects_per_block;
    const type_id paper = data.graph.add_node_type("paper", papers);
    const type_id author = data.graph.add_node_type("author", authors);
    const type_id subject = data.graph.add_node_type("subject", subjects);
    const relation_id pa = data.graph.add_relation("pa", paper, author);
    const relation_id ps = data.graph.add_relation("ps", paper, subject);
    data.graph.set_target_type(paper);

    data.node_ids.resize(3);
    for (std::size_t i = 0; i < papers; ++i) data.node_ids[paper].push_back("p" + std::to_string(i));
    for (std::size_t i = 0; i < authors; ++i) data.node_ids[author].push_back("a" + std::to_string(i));
    for (std::size_t i = 0; i < subjects; ++i) data.node_ids[subject].push_back("s" + std::to_string(i));

    auto link = [&](relation_id rel, std::size_t others, std::size_t per_block, double intra, double inter) {
        for (std::size_t p = 0; p < papers; ++p) {
            const std::size_t pb = p / spec.papers_per_block;
            for (std::size_t o = 0; o < others; ++o) {
                const double prob = o / per_block == pb ? intra : inter;
                if (unit(rng) < prob) data.graph.add_edge(rel, static_cast<node_index>(p), static_cast<node_index>(o));
            }
        }
    };
    link(pa, authors, spec.authors_per_block, spec.pa_intra, spec.pa_inter);
    link(ps, subjects, spec.subjects_per_block, spec.ps_intra, spec.ps_inter);

    if (spec.feature_dim == 0) {
        data.features = tensor::identity(papers);
        data.identity_features = true;
    } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        tensor mu = tensor::matrix(spec.blocks, spec.feature_dim);
        for (double& v : mu.values()) v = normal(rng);
        data.features = tensor::matrix(papers, spec.feature_dim);
        for (std::size_t p = 0; p < papers; ++p)
            for (std::size_t k = 0; k < spec.feature_dim; ++k)
                data.features(p, k) = spec.feature_signal * mu(p / spec.papers_per_block, k) + normal(rng);
    }
    for (std::size_t b = 0; b < spec.blocks; ++b) data.class_names.push_back(std::to_string(b));
    for (std::size_t p = 0; p < papers; ++p) data.labels.push_back(p / spec.papers_per_block);
    return data;
}

dataset_paths make_synthetic(const synthetic_spec& spec, const std::filesystem::path& dir) {
    const dataset data = generate_synthetic(spec);
    dataset_paths paths = write_dataset(data, dir);
    auto out = open_output(dir / "hemi.conf");
    out << "# planted-partition dataset, generator seed " << spec.seed << '\n'
        << "nodes = nodes.tsv\n"
        << "relations = relations.tsv\n"
        << "edges = edges.tsv\n"
        << "labels = labels.tsv\n"
        << (spec.feature_dim > 0 ? "features = features.tsv\n" : "")
        << "target_type = paper\n"
        << "metapaths = pa.~pa, ps.~ps\n";
    return paths;
}

}  // namespace hemi

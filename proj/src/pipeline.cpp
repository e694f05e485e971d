#include "hemi/pipeline.hpp"

#include "hemi/error.hpp"
#include "hemi/train.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>

namespace hemi {

namespace {

const std::set<std::string, std::less<>> path_keys = {"nodes",  "relations",  "edges",     "features",
                                                      "labels", "output",     "checkpoint", "embeddings"};

const std::set<std::string, std::less<>> known_keys = {
    "nodes", "relations", "edges", "features", "labels", "target_type", "metapaths", "d", "d_m", "lambda", "seed",
    "epochs", "patience", "lr", "layers", "shared_encoder", "shared_discriminator", "per_metapath_corruption",
    "clip_norm", "prelu_init", "output", "checkpoint", "embeddings", "task", "hemi_weight", "runs", "lp_dim",
    "quiet", "train_frac", "val_frac", "test_frac", "probe_epochs", "probe_patience", "probe_lr", "probe_repeats",
    "cluster_restarts", "mask_test", "mask_val", "blocks", "papers_per_block", "authors_per_block",
    "subjects_per_block", "pa_intra", "pa_inter", "ps_intra", "ps_inter", "feature_dim", "feature_signal", "synthetic_seed"};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    return out;
}

void write_embeddings(const std::filesystem::path& path, const tensor& z) {
    auto out = open_output(path);
    write_tsv(out, z);
}

tensor read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open embeddings " + path.string() + " (run `train` or `embed` first)");
    return read_tsv(in);
}

struct loaded {
    dataset data;
    std::vector<metapath_graph> graphs;
};

loaded load(const run_config& cfg, const std::vector<std::string>& metapaths) {
    if (metapaths.empty()) throw usage_error("no meta-paths configured (key `metapaths`)");
    loaded l{ingest(cfg.data), {}};
    for (const auto& text : metapaths) {
        const metapath_spec spec = parse_metapath(l.data.graph, text);
        l.graphs.push_back(compose_metapath(l.data.graph, spec));
    }
    return l;
}

epoch_callback logger(const run_config& cfg, std::ostream& err, std::string prefix) {
    if (cfg.quiet) return {};
    return [&err, prefix = std::move(prefix)](std::size_t epoch, double loss) {
        err << prefix << "epoch " << (epoch + 1) << " loss " << format_double(loss) << '\n';
    };
}

void print_table(std::ostream& out, const std::vector<metric_row>& rows) {
    std::size_t wm = 6, ws = 5;
    for (const auto& r : rows) {
        wm = std::max(wm, r.metric.size());
        ws = std::max(ws, r.scope.size());
    }
    out << std::left << std::setw(static_cast<int>(wm) + 2) << "metric" << std::setw(static_cast<int>(ws) + 2)
        << "scope" << std::setw(10) << "mean"
        << "stddev\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(static_cast<int>(wm) + 2) << r.metric << std::setw(static_cast<int>(ws) + 2)
            << r.scope << std::fixed << std::setprecision(4) << std::setw(10) << r.value << r.stddev << '\n';
        out.unsetf(std::ios::floatfield);
    }
}

void emit_metrics(const run_config& cfg, const std::string& file, const std::vector<metric_row>& rows,
                  std::ostream& out) {
    std::filesystem::create_directories(cfg.output);
    auto f = open_output(cfg.output / file);
    write_metrics_tsv(f, rows);
    print_table(out, rows);
    out << "wrote " << (cfg.output / file).string() << '\n';
}

std::vector<std::pair<std::size_t, std::size_t>> labeled_pairs(const dataset& data,
                                                               std::span<const std::size_t> nodes) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t v : nodes) {
        if (data.labels[v] != unlabeled) out.emplace_back(v, data.labels[v]);
    }
    return out;
}

std::vector<std::size_t> argmax_rows(const tensor& t) {
    std::vector<std::size_t> out(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto row = t.row_span(r);
        out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

// Per-scope mean and stddev of link metrics over runs.
std::vector<metric_row> link_rows(const std::string& task, const std::vector<link_metrics>& runs) {
    std::vector<metric_row> rows;
    const auto& names = runs.front().names;
    auto add = [&](const std::string& metric, const std::string& scope, auto pick) {
        std::vector<double> values;
        for (const auto& m : runs) values.push_back(pick(m));
        const metric_summary s = summarize(values);
        rows.push_back({task, metric, scope, s.mean, s.stddev});
    };
    for (std::size_t j = 0; j < names.size(); ++j) {
        add("auc", names[j], [j](const link_metrics& m) { return m.auc[j]; });
        add("ap", names[j], [j](const link_metrics& m) { return m.ap[j]; });
    }
    add("auc", "all", [](const link_metrics& m) { return m.mean_auc; });
    add("ap", "all", [](const link_metrics& m) { return m.mean_ap; });
    return rows;
}

int cmd_ingest_check(const run_config& cfg, std::ostream& out) {
    const dataset data = ingest(cfg.data);
    const auto& g = data.graph;
    out << "node types:\n";
    for (const auto& t : g.node_types()) out << "  " << t.name << '\t' << t.count << '\n';
    out << "relations:\n";
    for (std::size_t r = 0; r < g.relations().size(); ++r) {
        const auto& rel = g.relations()[r];
        out << "  " << rel.name << '\t' << g.node_types()[rel.src_type].name << " -> "
            << g.node_types()[rel.dst_type].name << '\t' << g.edges(static_cast<relation_id>(r)).size() << " edges\n";
    }
    out << "target type: " << g.node_types()[g.target_type()].name << '\n';
    out << "features: " << data.features.rows() << " x " << data.features.cols()
        << (data.identity_features ? " (identity)" : "") << '\n';
    if (data.has_labels()) {
        const auto labeled = std::count_if(data.labels.begin(), data.labels.end(),
                                           [](std::size_t l) { return l != unlabeled; });
        out << "labels: " << labeled << " nodes, " << data.class_names.size() << " classes\n";
    }
    for (const auto& text : cfg.metapaths) {
        const metapath_graph mpg = compose_metapath(g, parse_metapath(g, text));
        out << "meta-path " << text << '\t' << mpg.undirected_edges().size() << " edges\n";
    }
    return 0;
}

int cmd_make_synthetic(const run_config& cfg, std::ostream& out) {
    make_synthetic(cfg.synthetic, cfg.output);
    out << "wrote synthetic dataset to " << cfg.output.string() << '\n';
    return 0;
}

int cmd_train(const run_config& cfg, std::ostream& out, std::ostream& err) {
    const loaded l = load(cfg, cfg.metapaths);
    const training_data data = training_data::from_graphs(l.graphs, l.data.features);
    const selfsup_result res = train_selfsup(data, cfg.model, logger(cfg, err, ""));

    std::filesystem::create_directories(cfg.output);
    save_checkpoint(cfg.output / "checkpoint", res.params, cfg.metapaths, cfg.model);
    write_embeddings(cfg.output / "embeddings.tsv", res.embeddings.fused.value());
    {
        auto f = open_output(cfg.output / "train_report.tsv");
        write_report_tsv(f, res.report);
    }
    {
        auto f = open_output(cfg.output / "attention.tsv");
        f << "metapath\tbeta\n";
        for (std::size_t j = 0; j < cfg.metapaths.size(); ++j)
            f << cfg.metapaths[j] << '\t' << format_double(res.embeddings.beta.value()[j]) << '\n';
    }
    const auto& r = res.report;
    out << "epochs run      " << r.epochs_run() << " (" << (r.reason == stop_reason::patience ? "patience" : "max epochs")
        << ")\n"
        << "best epoch      " << (r.best_epoch + 1) << '\n'
        << "best loss       " << format_double(r.losses[r.best_epoch]) << '\n';
    for (std::size_t j = 0; j < cfg.metapaths.size(); ++j)
        out << "beta " << cfg.metapaths[j] << "  " << res.embeddings.beta.value()[j] << '\n';
    out << "wrote " << cfg.output.string() << "/{checkpoint,embeddings.tsv,train_report.tsv,attention.tsv}\n";
    return 0;
}

int cmd_embed(const run_config& cfg, std::ostream& out) {
    const checkpoint ck = load_checkpoint(cfg.checkpoint_dir());
    const loaded l = load(cfg, ck.metapaths);
    if (l.data.features.cols() != ck.params.d_in) {
        throw data_error("checkpoint expects " + std::to_string(ck.params.d_in) + " input features, dataset has " +
                         std::to_string(l.data.features.cols()));
    }
    const training_data data = training_data::from_graphs(l.graphs, l.data.features);
    const embedding_set emb = forward(ck.params, data.adjacency, var::constant(data.features));
    std::filesystem::create_directories(cfg.output);
    write_embeddings(cfg.output / "embeddings.tsv", emb.fused.value());
    out << "wrote " << (cfg.output / "embeddings.tsv").string() << " (" << emb.fused.rows() << " x "
        << emb.fused.cols() << ")\n";
    return 0;
}

int cmd_eval_classify(const run_config& cfg, std::ostream& out) {
    const tensor z = read_embeddings(cfg.embeddings_file());
    const dataset data = ingest(cfg.data);
    const auto labels = data.full_labels();
    if (labels.size() != z.rows()) throw data_error("embedding rows do not match target node count");
    split_spec split = cfg.split;
    split.seed = cfg.model.seed;
    const probe_result res = probe_classify(z, labels, split, cfg.probe);
    emit_metrics(cfg, "metrics_classify.tsv",
                 {{"classify", "macro_f1", "all", res.macro_f1.mean, res.macro_f1.stddev},
                  {"classify", "micro_f1", "all", res.micro_f1.mean, res.micro_f1.stddev}},
                 out);
    return 0;
}

int cmd_eval_cluster(const run_config& cfg, std::ostream& out) {
    const tensor z = read_embeddings(cfg.embeddings_file());
    const dataset data = ingest(cfg.data);
    const auto labels = data.full_labels();
    if (labels.size() != z.rows()) throw data_error("embedding rows do not match target node count");
    const cluster_result res = cluster_eval(z, labels, data.class_names.size(), cfg.model.seed, cfg.cluster_restarts);
    emit_metrics(cfg, "metrics_cluster.tsv",
                 {{"cluster", "nmi", "all", res.nmi.mean, res.nmi.stddev},
                  {"cluster", "ari", "all", res.ari.mean, res.ari.stddev}},
                 out);
    return 0;
}

int cmd_eval_linkpred(const run_config& cfg, std::ostream& out, std::ostream& err) {
    const loaded l = load(cfg, cfg.metapaths);
    std::vector<link_metrics> runs;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        hemi_config model = cfg.model;
        model.d = cfg.lp_dim;
        model.seed = cfg.model.seed + r;
        const edge_mask mask = mask_edges(l.graphs, cfg.mask, model.seed);
        const auto residual = mask.residual_graphs();
        const training_data data = training_data::from_graphs(residual, l.data.features);
        const selfsup_result res = train_selfsup(data, model, logger(cfg, err, "run " + std::to_string(r + 1) + " "));
        runs.push_back(link_eval(res.embeddings.fused.value(), mask));
    }
    emit_metrics(cfg, "metrics_linkpred.tsv", link_rows("linkpred", runs), out);
    return 0;
}

int cmd_train_augmented(const run_config& cfg, std::ostream& out, std::ostream& err) {
    const loaded l = load(cfg, cfg.metapaths);
    if (cfg.task == "nc") {
        const auto labels = l.data.full_labels();
        const training_data data = training_data::from_graphs(l.graphs, l.data.features);
        std::vector<double> macro, micro;
        for (std::size_t r = 0; r < cfg.runs; ++r) {
            hemi_config model = cfg.model;
            model.seed = cfg.model.seed + r;
            std::mt19937_64 split_rng(derive_seed(model.seed, 5));
            const node_split split = draw_split(cfg.split, labels.size(), split_rng);
            const auto labeled = labeled_pairs(l.data, split.train);
            const augmented_result res = train_augmented_nc(data, labeled, l.data.class_names.size(), model,
                                                            cfg.hemi_weight,
                                                            logger(cfg, err, "run " + std::to_string(r + 1) + " "));
            const auto predicted = argmax_rows(res.output);
            std::vector<std::size_t> truth, pred;
            for (std::size_t v : split.test) {
                truth.push_back(labels[v]);
                pred.push_back(predicted[v]);
            }
            const f1_scores f = f1(truth, pred);
            macro.push_back(f.macro);
            micro.push_back(f.micro);
        }
        const metric_summary ma = summarize(macro), mi = summarize(micro);
        emit_metrics(cfg, "metrics_augmented.tsv",
                     {{"augmented_nc", "macro_f1", "all", ma.mean, ma.stddev},
                      {"augmented_nc", "micro_f1", "all", mi.mean, mi.stddev}},
                     out);
        return 0;
    }
    if (cfg.task == "lp") {
        std::vector<link_metrics> runs;
        for (std::size_t r = 0; r < cfg.runs; ++r) {
            hemi_config model = cfg.model;
            model.d = cfg.lp_dim;
            model.seed = cfg.model.seed + r;
            const edge_mask mask = mask_edges(l.graphs, cfg.mask, model.seed);
            const training_data data = training_data::from_graphs(mask.residual_graphs(), l.data.features);
            const auto positives = mask.residual_edges();
            link_validation validation;
            for (const auto& split : mask.per_path) {
                validation.positives.insert(validation.positives.end(), split.val_pos.begin(), split.val_pos.end());
                validation.negatives.insert(validation.negatives.end(), split.val_neg.begin(), split.val_neg.end());
            }
            const augmented_result res = train_augmented_lp(data, positives, model, cfg.hemi_weight, validation,
                                                            logger(cfg, err, "run " + std::to_string(r + 1) + " "));
            runs.push_back(link_eval(res.output, mask));
        }
        emit_metrics(cfg, "metrics_augmented.tsv", link_rows("augmented_lp", runs), out);
        return 0;
    }
    throw usage_error("task must be nc or lp, got '" + cfg.task + "'");
}

}  // namespace

std::filesystem::path run_config::checkpoint_dir() const {
    return checkpoint.empty() ? output / "checkpoint" : checkpoint;
}

std::filesystem::path run_config::embeddings_file() const {
    return embeddings.empty() ? output / "embeddings.tsv" : embeddings;
}

run_config run_config::from_key_values(const key_values& kv, const std::filesystem::path& base_dir) {
    for (const auto& [key, value] : kv.entries()) {
        if (!known_keys.count(key)) throw usage_error("unknown config key '" + key + "'");
    }
    run_config c;
    auto path_of = [&](const char* key, std::filesystem::path& dst) {
        if (kv.has(key)) dst = resolve(base_dir, kv.get(key));
    };
    auto size_of = [&](const char* key, std::size_t& dst) {
        if (kv.has(key)) dst = kv.get_size(key);
    };
    auto double_of = [&](const char* key, double& dst) {
        if (kv.has(key)) dst = kv.get_double(key);
    };
    auto bool_of = [&](const char* key, bool& dst) {
        if (kv.has(key)) dst = kv.get_bool(key);
    };

    path_of("nodes", c.data.nodes);
    path_of("relations", c.data.relations);
    path_of("edges", c.data.edges);
    path_of("features", c.data.features);
    path_of("labels", c.data.labels);
    c.data.target_type = kv.get_or("target_type", "");
    if (kv.has("metapaths")) c.metapaths = split_list(kv.get("metapaths"));

    size_of("d", c.model.d);
    size_of("d_m", c.model.d_m);
    double_of("lambda", c.model.lambda);
    if (kv.has("seed")) c.model.seed = kv.get_size("seed");
    size_of("epochs", c.model.epochs);
    size_of("patience", c.model.patience);
    double_of("lr", c.model.lr);
    size_of("layers", c.model.layers);
    bool_of("shared_encoder", c.model.shared_encoder);
    bool_of("shared_discriminator", c.model.shared_discriminator);
    bool_of("per_metapath_corruption", c.model.per_metapath_corruption);
    double_of("clip_norm", c.model.clip_norm);
    double_of("prelu_init", c.model.prelu_init);

    path_of("output", c.output);
    path_of("checkpoint", c.checkpoint);
    path_of("embeddings", c.embeddings);
    c.task = kv.get_or("task", c.task);
    double_of("hemi_weight", c.hemi_weight);
    size_of("runs", c.runs);
    size_of("lp_dim", c.lp_dim);
    bool_of("quiet", c.quiet);

    double_of("train_frac", c.split.train_frac);
    double_of("val_frac", c.split.val_frac);
    double_of("test_frac", c.split.test_frac);
    size_of("probe_epochs", c.probe.epochs);
    size_of("probe_patience", c.probe.patience);
    double_of("probe_lr", c.probe.lr);
    size_of("probe_repeats", c.probe.repeats);
    size_of("cluster_restarts", c.cluster_restarts);
    double_of("mask_test", c.mask.test);
    double_of("mask_val", c.mask.val);

    size_of("blocks", c.synthetic.blocks);
    size_of("papers_per_block", c.synthetic.papers_per_block);
    size_of("authors_per_block", c.synthetic.authors_per_block);
    size_of("subjects_per_block", c.synthetic.subjects_per_block);
    double_of("pa_intra", c.synthetic.pa_intra);
    double_of("pa_inter", c.synthetic.pa_inter);
    double_of("ps_intra", c.synthetic.ps_intra);
    double_of("ps_inter", c.synthetic.ps_inter);
    size_of("feature_dim", c.synthetic.feature_dim);
    double_of("feature_signal", c.synthetic.feature_signal);
    if (kv.has("synthetic_seed")) c.synthetic.seed = kv.get_size("synthetic_seed");

    if (c.runs == 0) throw usage_error("runs must be at least 1");
    if (c.lp_dim == 0) throw usage_error("lp_dim must be at least 1");
    if (!(c.hemi_weight >= 0.0)) throw usage_error("hemi_weight must be non-negative");
    c.model.validate();
    return c;
}

run_config load_run_config(const std::filesystem::path& config_file, const key_values& overrides) {
    key_values kv;
    std::filesystem::path base;
    if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw usage_error("cannot open config " + config_file.string());
        kv = parse_key_values(in, config_file.string());
        base = config_file.parent_path();
    }
    for (const auto& [key, value] : overrides.entries()) {
        if (path_keys.count(key)) {
            kv.set(key, std::filesystem::absolute(value).string());
        } else {
            kv.set(key, value);
        }
    }
    if (const char* env = std::getenv("HEMI_SEED"); env != nullptr && *env != '\0') {
        kv.set("seed", env);
    }
    return run_config::from_key_values(kv, base);
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"ingest-check", "make-synthetic", "train",
                                                   "embed",        "eval-classify",  "eval-cluster",
                                                   "eval-linkpred", "train-augmented"};
    return names;
}

int run(const std::string& command, const run_config& config, std::ostream& out, std::ostream& err) {
    try {
        if (command == "ingest-check") return cmd_ingest_check(config, out);
        if (command == "make-synthetic") return cmd_make_synthetic(config, out);
        if (command == "train") return cmd_train(config, out, err);
        if (command == "embed") return cmd_embed(config, out);
        if (command == "eval-classify") return cmd_eval_classify(config, out);
        if (command == "eval-cluster") return cmd_eval_cluster(config, out);
        if (command == "eval-linkpred") return cmd_eval_linkpred(config, out, err);
        if (command == "train-augmented") return cmd_train_augmented(config, out, err);
        throw usage_error("unknown command '" + command + "'");
    } catch (const usage_error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(exit_code::usage);
    } catch (const numeric_error& e) {
        err << "numeric error: " << e.what() << '\n';
        return static_cast<int>(exit_code::numeric);
    } catch (const std::exception& e) {
        err << "data error: " << e.what() << '\n';
        return static_cast<int>(exit_code::data);
    }
}

}  // namespace hemi

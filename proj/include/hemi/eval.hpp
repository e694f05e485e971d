#pragma once

#include "hemi/graph.hpp"
#include "hemi/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hemi {

struct metric_summary {
    double mean = 0.0;
    double stddev = 0.0;
};

metric_summary summarize(std::span<const double> values);

// ---------------------------------------------------------------------------
// Classification

/// Node split by fractions (drawn per repeat) or by explicit index lists.
struct split_spec {
    double train_frac = 0.2;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;

    bool explicit_lists() const { return !train.empty(); }
    void validate(std::size_t n) const;
};

struct node_split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

node_split draw_split(const split_spec& spec, std::size_t n, std::mt19937_64& rng);

struct f1_scores {
    double macro = 0.0;
    double micro = 0.0;
};

/// Macro-F1 averages over classes present in either truth or prediction.
f1_scores f1(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);

struct probe_options {
    std::size_t epochs = 1000;
    std::size_t patience = 20;
    double lr = 1e-3;
    std::size_t repeats = 10;
};

/// One logistic-regression fit on frozen embeddings; returns test F1.
f1_scores probe_once(const tensor& z, std::span<const std::size_t> labels, const node_split& split,
                     std::uint64_t seed, const probe_options& options);

struct probe_result {
    metric_summary macro_f1;
    metric_summary micro_f1;
};

/// Mean over `repeats` fits; fraction splits are redrawn per repeat.
probe_result probe_classify(const tensor& z, std::span<const std::size_t> labels, const split_spec& split,
                            const probe_options& options = {});

// ---------------------------------------------------------------------------
// Clustering

struct kmeans_result {
    std::vector<std::size_t> assignment;
    tensor centroids;
    double inertia = 0.0;
    std::size_t iterations = 0;
};

/// Lloyd iterations from k-means++ seeding.
kmeans_result kmeans(const tensor& x, std::size_t k, std::mt19937_64& rng, std::size_t max_iterations = 300);

/// Mutual information normalized by the arithmetic mean of the entropies.
double nmi(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);
double ari(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);

struct cluster_result {
    metric_summary nmi;
    metric_summary ari;
};

/// `restarts` independent k-means runs; metrics averaged over runs.
cluster_result cluster_eval(const tensor& z, std::span<const std::size_t> labels, std::size_t k,
                            std::uint64_t seed, std::size_t restarts = 10);

// ---------------------------------------------------------------------------
// Link prediction

struct mask_fractions {
    double test = 0.45;
    double val = 0.05;
};

struct edge_split {
    std::vector<edge> test_pos;
    std::vector<edge> val_pos;
    std::vector<edge> test_neg;
    std::vector<edge> val_neg;
    metapath_graph residual;
};

struct edge_mask {
    std::vector<edge_split> per_path;

    std::vector<metapath_graph> residual_graphs() const;
    /// Union of residual undirected edges over all meta-paths.
    std::vector<edge> residual_edges() const;
};

/// Held-out count is round(m * (test + val)); validation takes
/// floor(m * val) and test the remainder.
edge_mask mask_edges(std::span<const metapath_graph> graphs, const mask_fractions& fractions, std::uint64_t seed);

/// Rank-based AUC with midranks for ties.
double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

/// Area under the precision-recall step function.
double average_precision(std::span<const double> positive_scores, std::span<const double> negative_scores);

struct link_metrics {
    std::vector<std::string> names;
    std::vector<double> auc;
    std::vector<double> ap;
    double mean_auc = 0.0;
    double mean_ap = 0.0;
};

/// sigmoid(z_u . z_v) scores on each meta-path's test pairs.
link_metrics link_eval(const tensor& z, const edge_mask& mask);

// ---------------------------------------------------------------------------

struct metric_row {
    std::string task;
    std::string metric;
    std::string scope;  // meta-path name or "all"
    double value = 0.0;
    double stddev = 0.0;
};

/// `task<TAB>metric<TAB>metapath-or-all<TAB>value<TAB>stddev`
void write_metrics_tsv(std::ostream& out, std::span<const metric_row> rows);
std::vector<metric_row> read_metrics_tsv(std::istream& in);

}  // namespace hemi

#pragma once

#include "hemi/graph.hpp"
#include "hemi/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hemi {

struct dataset_paths {
    std::filesystem::path nodes;
    std::filesystem::path relations;
    std::filesystem::path edges;
    std::filesystem::path features;  // optional
    std::filesystem::path labels;    // optional
    std::string target_type;
};

inline constexpr std::size_t unlabeled = static_cast<std::size_t>(-1);

struct dataset {
    hetero_graph graph;
    std::vector<std::vector<std::string>> node_ids;  // per type, dense index -> id
    tensor features;                                 // |V_t| x f
    bool identity_features = false;
    std::vector<std::size_t> labels;  // per target node, `unlabeled` when missing
    std::vector<std::string> class_names;

    bool has_labels() const { return !class_names.empty(); }
    /// Labels for every target node; throws data_error if any is missing.
    std::vector<std::size_t> full_labels() const;
};

/// Reads the tab-separated node, relation-signature, edge, feature, and
/// label files. Errors name the file and line.
dataset ingest(const dataset_paths& paths);

/// Writes nodes.tsv, relations.tsv, edges.tsv, and labels.tsv / features.tsv
/// when present. Returns the paths written.
dataset_paths write_dataset(const dataset& data, const std::filesystem::path& dir);

/// Planted-partition Paper/Author/Subject graph. Papers, authors, and
/// subjects are split evenly into blocks; each paper-author and
/// paper-subject pair links with the intra- or inter-block probability.
/// With feature_dim > 0 papers get features signal * mu_block + N(0, I)
/// with mu_block ~ N(0, I); otherwise identity features.
struct synthetic_spec {
    std::size_t blocks = 3;
    std::size_t papers_per_block = 30;
    std::size_t authors_per_block = 10;
    std::size_t subjects_per_block = 10;
    double pa_intra = 0.3;
    double pa_inter = 0.01;
    double ps_intra = 0.3;
    double ps_inter = 0.01;
    std::size_t feature_dim = 0;
    double feature_signal = 0.6;
    std::uint64_t seed = 7;

    void validate() const;
};

/// In-memory synthetic dataset; labels are paper block ids.
dataset generate_synthetic(const synthetic_spec& spec);

/// Writes the dataset files plus hemi.conf (meta-paths pa.~pa and ps.~ps).
dataset_paths make_synthetic(const synthetic_spec& spec, const std::filesystem::path& dir);

}  // namespace hemi

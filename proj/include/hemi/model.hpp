#pragma once

#include "hemi/autodiff.hpp"
#include "hemi/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hemi {

struct hemi_config {
    std::size_t d = 256;
    std::size_t d_m = 16;
    double lambda = 0.5;
    std::uint64_t seed = 0;
    std::size_t epochs = 1000;
    std::size_t patience = 50;
    double lr = 1e-3;
    std::size_t layers = 1;
    bool shared_encoder = false;
    bool shared_discriminator = false;
    // One corruption permutation per meta-path instead of one per step.
    bool per_metapath_corruption = false;
    // Global gradient-norm cap; 0 disables clipping.
    double clip_norm = 5.0;
    double prelu_init = 0.25;

    /// Throws usage_error on out-of-range values.
    void validate() const;
};

struct encoder_params {
    std::vector<var> weights;  // one per layer
    std::vector<var> slopes;   // 1x1 PReLU slope per layer
};

/// All learnable weights. With the shared modes a single encoder or a single
/// discriminator pair serves every meta-path.
struct model_params {
    std::size_t metapaths = 0;
    std::size_t d_in = 0;
    std::size_t d = 0;
    std::size_t d_m = 0;

    std::vector<encoder_params> encoders;
    var w_sem;  // d_m x d
    var bias;   // 1 x d_m
    var q;      // d_m x 1
    std::vector<var> w_fine;    // d x d each
    std::vector<var> w_coarse;  // d x d each

    static model_params init(std::size_t metapaths, std::size_t d_in, const hemi_config& cfg,
                             std::mt19937_64& rng);

    const encoder_params& encoder(std::size_t j) const { return encoders[encoders.size() == 1 ? 0 : j]; }
    const var& fine(std::size_t j) const { return w_fine[w_fine.size() == 1 ? 0 : j]; }
    const var& coarse(std::size_t j) const { return w_coarse[w_coarse.size() == 1 ? 0 : j]; }

    /// Stable name -> parameter listing; also the checkpoint file names.
    std::vector<std::pair<std::string, var>> named() const;
    std::vector<var> all() const;

    /// Deep copy of the values into fresh parameter vars.
    model_params clone() const;
    void zero_grad();
};

/// Per-meta-path embeddings, their summaries, attention, and the fused view.
struct embedding_set {
    std::vector<var> per_path;   // n x d each
    std::vector<var> summaries;  // 1 x d each
    var scores;                  // 1 x M pre-softmax attention scores
    var beta;                    // 1 x M
    var fused;                   // n x d
};

struct fusion_result {
    var scores;
    var beta;
    var fused;
};

/// D^-1/2 (A + I) D^-1/2 with a self-loop on every node.
sparse_matrix gcn_normalize(const metapath_graph& mpg);

/// One GCN layer: PReLU(adj * X * W).
var encode_metapath(const sparse_matrix& norm_adj, const var& x, const var& w, const var& slope);

/// Stacked layers of encode_metapath with the given encoder weights.
var encode(const sparse_matrix& norm_adj, const var& x, const encoder_params& enc);

/// sigmoid(mean over rows).
var summary(const var& z);

/// Semantic attention: e_j = mean_v q^T (W_sem z_v^j + b), beta = softmax(e),
/// fused = sum_j beta_j Z^j.
fusion_result fuse(std::span<const var> per_path, const var& w_sem, const var& bias, const var& q);

std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng);
tensor permute_rows(const tensor& x, std::span<const std::size_t> perm);

/// Row-shuffled copy of X.
tensor corrupt(const tensor& x, std::mt19937_64& rng);

/// Logits z^P_v W z_v for every row v: n x 1.
var fine_logits(const var& z_path, const var& z_fused, const var& w);
/// Logits s W z_v for every row v: n x 1.
var coarse_logits(const var& s, const var& z_fused, const var& w);

/// Discriminator probabilities for single vector pairs.
double disc_fine(std::span<const double> z_path_row, std::span<const double> z_fused_row, const tensor& w);
double disc_coarse(std::span<const double> s, std::span<const double> z_fused_row, const tensor& w);

/// Encoders and fusion on one feature matrix per meta-path (size 1 means
/// the same features feed every meta-path).
embedding_set forward(const model_params& params, std::span<const sparse_matrix> adjacency,
                      std::span<const var> features);
embedding_set forward(const model_params& params, std::span<const sparse_matrix> adjacency, const var& features);

/// lambda * L_f + (1 - lambda) * L_c as averaged binary cross-entropy.
var hemi_loss(const embedding_set& clean, const var& corrupted_fused, const model_params& params, double lambda);

struct checkpoint {
    model_params params;
    std::vector<std::string> metapaths;
    hemi_config config;
};

/// Writes manifest.txt plus one binary tensor file per parameter.
void save_checkpoint(const std::filesystem::path& dir, const model_params& params,
                     std::span<const std::string> metapaths, const hemi_config& cfg);
checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace hemi

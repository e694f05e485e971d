#pragma once

#include "hemi/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace hemi {

enum class stop_reason { patience, max_epochs };

struct train_report {
    std::vector<double> losses;
    std::size_t best_epoch = 0;  // 0-based index into losses
    stop_reason reason = stop_reason::max_epochs;
    double seconds = 0.0;
    std::uint64_t seed = 0;

    std::size_t epochs_run() const { return losses.size(); }
};

/// `epoch<TAB>loss` rows followed by a `# best_epoch=... stop=... seconds=... seed=...` line.
void write_report_tsv(std::ostream& out, const train_report& report);

/// Normalized meta-path adjacencies plus target-node features.
struct training_data {
    std::vector<sparse_matrix> adjacency;
    tensor features;

    static training_data from_graphs(std::span<const metapath_graph> graphs, tensor features);
};

using epoch_callback = std::function<void(std::size_t epoch, double loss)>;

struct selfsup_result {
    model_params params;
    embedding_set embeddings;
    train_report report;
};

/// Full-batch self-supervised training with early stopping on the training
/// loss. Returns the parameters from the lowest-loss epoch and embeddings
/// recomputed from clean inputs with them.
selfsup_result train_selfsup(const training_data& data, const hemi_config& cfg, const epoch_callback& on_epoch = {});

/// Independent random streams derived from one seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Mean over labeled rows of -log softmax(logits)[label].
var classification_loss(const var& logits, std::span<const std::pair<std::size_t, std::size_t>> labeled);

/// Mean -log sigma(<h_v, h_u>) over positives plus the same for -<h_v, h_u'>
/// over negatives.
var link_loss(const var& h, std::span<const edge> positives, std::span<const edge> negatives);

struct augmented_result {
    model_params params;
    var w_task;
    tensor fused;   // z
    tensor output;  // z * W_task
    train_report report;
};

/// Cross-entropy on labeled nodes of softmax(z W_task) plus hemi_weight times
/// the self-supervised loss on z. hemi_weight = 0 skips the HeMI term.
augmented_result train_augmented_nc(const training_data& data,
                                    std::span<const std::pair<std::size_t, std::size_t>> labeled,
                                    std::size_t num_classes, const hemi_config& cfg, double hemi_weight,
                                    const epoch_callback& on_epoch = {});

/// Uniform negatives among unobserved target pairs (no self pairs), equal in
/// number to the positives.
std::vector<edge> sample_negative_pairs(std::size_t n, std::span<const edge> observed, std::size_t count,
                                        std::mt19937_64& rng);

/// Held-out pairs for model selection. When given, the kept parameters are
/// those of the epoch with the best validation AUC of h_u . h_v, and patience
/// counts epochs without a validation improvement.
struct link_validation {
    std::vector<edge> positives;
    std::vector<edge> negatives;
};

/// Link loss on h = z W_task with fresh negatives every epoch, plus
/// hemi_weight times the self-supervised loss.
augmented_result train_augmented_lp(const training_data& data, std::span<const edge> positives,
                                    const hemi_config& cfg, double hemi_weight, const epoch_callback& on_epoch = {});
augmented_result train_augmented_lp(const training_data& data, std::span<const edge> positives,
                                    const hemi_config& cfg, double hemi_weight, const link_validation& validation,
                                    const epoch_callback& on_epoch = {});

}  // namespace hemi

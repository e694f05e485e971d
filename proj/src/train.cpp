#include "hemi/train.hpp"

#include "hemi/adam.hpp"
#include "hemi/error.hpp"
#include "hemi/eval.hpp"
#include "hemi/kv.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_set>

namespace hemi {

namespace {

constexpr std::uint64_t init_stream = 1;
constexpr std::uint64_t corruption_stream = 2;
constexpr std::uint64_t task_stream = 3;
constexpr std::uint64_t negative_stream = 4;

std::uint64_t pair_key(node_index a, node_index b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

// Shared epoch loop: early stopping on the training loss with a snapshot of
// the parameter values at the best epoch, restored before returning.
// `select` maps the loss of an epoch to the model-selection score (lower is
// better); the default is the loss itself.
template <typename StepLoss, typename Select>
train_report optimize(std::vector<var> params, const hemi_config& cfg, StepLoss&& step_loss, Select&& select,
                      const epoch_callback& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    train_report report;
    report.seed = cfg.seed;

    adam_state adam;
    adam.config.lr = cfg.lr;

    double best = std::numeric_limits<double>::infinity();
    std::vector<tensor> best_values;
    std::size_t since_best = 0;
    report.reason = stop_reason::max_epochs;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        var loss = step_loss(epoch);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw numeric_error("non-finite training loss at epoch " + std::to_string(epoch + 1));
        }
        report.losses.push_back(value);
        if (on_epoch) on_epoch(epoch, value);

        const double score = select(loss);
        if (score < best) {
            best = score;
            report.best_epoch = epoch;
            best_values.clear();
            for (const var& p : params) best_values.push_back(p.value());
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            report.reason = stop_reason::patience;
            break;
        }

        for (var& p : params) p.zero_grad();
        backward(loss);
        if (cfg.clip_norm > 0.0) clip_grad_norm(params, cfg.clip_norm);
        adam_step(adam, params);
    }

    for (std::size_t k = 0; k < best_values.size(); ++k) params[k].value() = best_values[k];
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

template <typename StepLoss>
train_report optimize(std::vector<var> params, const hemi_config& cfg, StepLoss&& step_loss,
                      const epoch_callback& on_epoch) {
    return optimize(std::move(params), cfg, std::forward<StepLoss>(step_loss),
                    [](const var& loss) { return loss.item(); }, on_epoch);
}

void check_data(const training_data& data) {
    if (data.adjacency.empty()) throw usage_error("at least one meta-path graph is required");
    const std::size_t n = data.features.rows();
    for (const auto& a : data.adjacency) {
        if (a.rows() != n || a.cols() != n) {
            throw data_error("features cover " + std::to_string(n) + " target nodes but a meta-path graph has " +
                             std::to_string(a.rows()));
        }
    }
}

// Corrupted features: one permutation shared by all meta-paths, or one each.
std::vector<var> corrupted_inputs(const tensor& x, std::size_t metapaths, bool per_path, std::mt19937_64& rng) {
    std::vector<var> out;
    const std::size_t count = per_path ? metapaths : 1;
    for (std::size_t j = 0; j < count; ++j) out.push_back(var::constant(corrupt(x, rng)));
    return out;
}

var hemi_term(const model_params& params, const training_data& data, const embedding_set& clean, const tensor& x,
              const hemi_config& cfg, std::mt19937_64& rng) {
    auto xs = corrupted_inputs(x, data.adjacency.size(), cfg.per_metapath_corruption, rng);
    embedding_set corrupted = forward(params, data.adjacency, xs);
    return hemi_loss(clean, corrupted.fused, params, cfg.lambda);
}

std::vector<double> dot_scores(const tensor& h, std::span<const edge> pairs) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& e : pairs) {
        const auto a = h.row_span(e.src);
        const auto b = h.row_span(e.dst);
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
        out.push_back(s);
    }
    return out;
}

}  // namespace

void write_report_tsv(std::ostream& out, const train_report& report) {
    out << "epoch\tloss\n";
    for (std::size_t e = 0; e < report.losses.size(); ++e) {
        out << (e + 1) << '\t' << format_double(report.losses[e]) << '\n';
    }
    out << "# best_epoch=" << (report.best_epoch + 1)
        << " stop=" << (report.reason == stop_reason::patience ? "patience" : "max-epochs")
        << " epochs=" << report.losses.size() << " seconds=" << report.seconds << " seed=" << report.seed << '\n';
}

training_data training_data::from_graphs(std::span<const metapath_graph> graphs, tensor features) {
    training_data data;
    for (const auto& g : graphs) data.adjacency.push_back(gcn_normalize(g));
    data.features = std::move(features);
    check_data(data);
    return data;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

selfsup_result train_selfsup(const training_data& data, const hemi_config& cfg, const epoch_callback& on_epoch) {
    cfg.validate();
    check_data(data);
    std::mt19937_64 init_rng(derive_seed(cfg.seed, init_stream));
    std::mt19937_64 corrupt_rng(derive_seed(cfg.seed, corruption_stream));

    selfsup_result result;
    result.params = model_params::init(data.adjacency.size(), data.features.cols(), cfg, init_rng);
    const var x = var::constant(data.features);
    const model_params& params = result.params;

    result.report = optimize(
        params.all(), cfg,
        [&](std::size_t) {
            embedding_set clean = forward(params, data.adjacency, x);
            return hemi_term(params, data, clean, data.features, cfg, corrupt_rng);
        },
        on_epoch);
    result.embeddings = forward(params, data.adjacency, x);
    return result;
}

var classification_loss(const var& logits, std::span<const std::pair<std::size_t, std::size_t>> labeled) {
    if (labeled.empty()) throw data_error("no labeled nodes");
    tensor mask = tensor::matrix(logits.rows(), logits.cols());
    for (const auto& [node, label] : labeled) {
        if (node >= logits.rows()) throw data_error("label references unknown node " + std::to_string(node));
        if (label >= logits.cols()) throw data_error("label " + std::to_string(label) + " outside class range");
        mask(node, label) += 1.0;
    }
    return scale(sum_all(mul(log_softmax(logits), var::constant(std::move(mask)))),
                 -1.0 / static_cast<double>(labeled.size()));
}

var link_loss(const var& h, std::span<const edge> positives, std::span<const edge> negatives) {
    if (positives.empty() || negatives.empty()) throw data_error("link loss needs positive and negative pairs");
    auto to_pairs = [](std::span<const edge> edges) {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        out.reserve(edges.size());
        for (const auto& e : edges) out.emplace_back(e.src, e.dst);
        return out;
    };
    const auto pos = to_pairs(positives);
    const auto negs = to_pairs(negatives);
    var pos_term = mean_all(log_sigmoid(pair_dot(h, pos)));
    var neg_term = mean_all(log_sigmoid(neg(pair_dot(h, negs))));
    return neg(add(pos_term, neg_term));
}

augmented_result train_augmented_nc(const training_data& data,
                                    std::span<const std::pair<std::size_t, std::size_t>> labeled,
                                    std::size_t num_classes, const hemi_config& cfg, double hemi_weight,
                                    const epoch_callback& on_epoch) {
    cfg.validate();
    check_data(data);
    if (labeled.empty()) throw data_error("augmented classification needs labeled nodes");
    if (num_classes < 2) throw data_error("augmented classification needs at least 2 classes");
    const std::size_t n = data.features.rows();
    for (const auto& [node, label] : labeled) {
        if (node >= n) throw data_error("label references unknown node " + std::to_string(node));
        if (label >= num_classes) throw data_error("label " + std::to_string(label) + " outside class range");
    }

    std::mt19937_64 init_rng(derive_seed(cfg.seed, init_stream));
    std::mt19937_64 task_rng(derive_seed(cfg.seed, task_stream));
    std::mt19937_64 corrupt_rng(derive_seed(cfg.seed, corruption_stream));

    augmented_result result;
    result.params = model_params::init(data.adjacency.size(), data.features.cols(), cfg, init_rng);
    result.w_task = var::parameter(glorot_init(cfg.d, num_classes, task_rng));
    const var x = var::constant(data.features);
    const model_params& params = result.params;

    auto trainable = params.all();
    trainable.push_back(result.w_task);
    result.report = optimize(
        trainable, cfg,
        [&](std::size_t) {
            embedding_set clean = forward(params, data.adjacency, x);
            var loss = classification_loss(matmul(clean.fused, result.w_task), labeled);
            if (hemi_weight != 0.0) {
                loss = add(loss, scale(hemi_term(params, data, clean, data.features, cfg, corrupt_rng), hemi_weight));
            }
            return loss;
        },
        on_epoch);
    embedding_set final_set = forward(params, data.adjacency, x);
    result.fused = final_set.fused.value();
    result.output = matmul_values(result.fused, result.w_task.value());
    return result;
}

std::vector<edge> sample_negative_pairs(std::size_t n, std::span<const edge> observed, std::size_t count,
                                        std::mt19937_64& rng) {
    if (n < 2) throw data_error("negative sampling needs at least 2 nodes");
    std::unordered_set<std::uint64_t> seen;
    for (const auto& e : observed) {
        if (e.src != e.dst) seen.insert(pair_key(e.src, e.dst));
    }
    const double total = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    if (static_cast<double>(seen.size()) > 0.95 * total) {
        throw data_error("graph too dense to sample negatives: " + std::to_string(seen.size()) + " of " +
                         std::to_string(static_cast<std::uint64_t>(total)) + " pairs observed");
    }
    std::uniform_int_distribution<node_index> pick(0, static_cast<node_index>(n - 1));
    std::vector<edge> out;
    out.reserve(count);
    while (out.size() < count) {
        const node_index a = pick(rng);
        const node_index b = pick(rng);
        if (a == b || seen.count(pair_key(a, b))) continue;
        out.push_back({std::min(a, b), std::max(a, b)});
    }
    return out;
}

augmented_result train_augmented_lp(const training_data& data, std::span<const edge> positives,
                                    const hemi_config& cfg, double hemi_weight, const link_validation& validation,
                                    const epoch_callback& on_epoch) {
    cfg.validate();
    check_data(data);
    if (positives.empty()) throw data_error("augmented link prediction needs positive edges");
    const std::size_t n = data.features.rows();
    for (const auto& e : positives) {
        if (e.src >= n || e.dst >= n) throw data_error("positive edge references unknown node");
    }
    const bool use_validation = !validation.positives.empty();
    if (use_validation && validation.negatives.empty()) throw data_error("validation needs negative pairs");

    std::mt19937_64 init_rng(derive_seed(cfg.seed, init_stream));
    std::mt19937_64 task_rng(derive_seed(cfg.seed, task_stream));
    std::mt19937_64 corrupt_rng(derive_seed(cfg.seed, corruption_stream));
    std::mt19937_64 negative_rng(derive_seed(cfg.seed, negative_stream));

    augmented_result result;
    result.params = model_params::init(data.adjacency.size(), data.features.cols(), cfg, init_rng);
    result.w_task = var::parameter(glorot_init(cfg.d, cfg.d, task_rng));
    const var x = var::constant(data.features);
    const model_params& params = result.params;

    auto trainable = params.all();
    trainable.push_back(result.w_task);
    tensor h_last;
    auto step = [&](std::size_t) {
        embedding_set clean = forward(params, data.adjacency, x);
        const auto negatives = sample_negative_pairs(n, positives, positives.size(), negative_rng);
        var h = matmul(clean.fused, result.w_task);
        h_last = h.value();
        var loss = link_loss(h, positives, negatives);
        if (hemi_weight != 0.0) {
            loss = add(loss, scale(hemi_term(params, data, clean, data.features, cfg, corrupt_rng), hemi_weight));
        }
        return loss;
    };
    if (use_validation) {
        auto select = [&](const var&) {
            return -roc_auc(dot_scores(h_last, validation.positives), dot_scores(h_last, validation.negatives));
        };
        result.report = optimize(trainable, cfg, step, select, on_epoch);
    } else {
        result.report = optimize(trainable, cfg, step, on_epoch);
    }
    embedding_set final_set = forward(params, data.adjacency, x);
    result.fused = final_set.fused.value();
    result.output = matmul_values(result.fused, result.w_task.value());
    return result;
}

augmented_result train_augmented_lp(const training_data& data, std::span<const edge> positives,
                                    const hemi_config& cfg, double hemi_weight, const epoch_callback& on_epoch) {
    return train_augmented_lp(data, positives, cfg, hemi_weight, link_validation{}, on_epoch);
}

}  // namespace hemi

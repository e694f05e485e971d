#include "hemi/eval.hpp"

#include "hemi/adam.hpp"
#include "hemi/autodiff.hpp"
#include "hemi/error.hpp"
#include "hemi/kv.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_set>

namespace hemi {

namespace {

std::uint64_t pair_key(node_index a, node_index b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::size_t class_count(std::span<const std::size_t> labels) {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

tensor gather_rows(const tensor& z, std::span<const std::size_t> rows) {
    const std::size_t c = z.cols();
    tensor out = tensor::matrix(rows.size(), c);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) = z(rows[i], j);
    return out;
}

std::vector<std::size_t> argmax_rows(const tensor& logits) {
    std::vector<std::size_t> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        out[i] = best;
    }
    return out;
}

// Contingency counts between two labelings.
std::map<std::pair<std::size_t, std::size_t>, double> contingency(std::span<const std::size_t> a,
                                                                  std::span<const std::size_t> b) {
    if (a.size() != b.size()) throw data_error("label vectors differ in length");
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    for (std::size_t i = 0; i < a.size(); ++i) table[{a[i], b[i]}] += 1.0;
    return table;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

metric_summary summarize(std::span<const double> values) {
    metric_summary s;
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

void split_spec::validate(std::size_t n) const {
    if (explicit_lists()) {
        std::unordered_set<std::size_t> seen;
        for (const auto* list : {&train, &val, &test}) {
            for (std::size_t v : *list) {
                if (v >= n) throw data_error("split index " + std::to_string(v) + " out of range");
                if (!seen.insert(v).second) throw data_error("split lists overlap at node " + std::to_string(v));
            }
        }
        return;
    }
    for (double f : {train_frac, val_frac, test_frac}) {
        if (!(f >= 0.0 && f <= 1.0)) throw usage_error("split fractions must lie in [0, 1]");
    }
    if (train_frac + val_frac + test_frac > 1.0 + 1e-12) throw usage_error("split fractions sum above 1");
}

node_split draw_split(const split_spec& spec, std::size_t n, std::mt19937_64& rng) {
    spec.validate(n);
    if (spec.explicit_lists()) return {spec.train, spec.val, spec.test};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    auto count = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
    const std::size_t n_train = count(spec.train_frac);
    const std::size_t n_val = count(spec.val_frac);
    const std::size_t n_test = count(spec.test_frac);
    node_split s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.begin() + n_train + n_val + n_test);
    return s;
}

f1_scores f1(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
    if (truth.size() != predicted.size()) throw data_error("truth and prediction differ in length");
    if (truth.empty()) throw data_error("F1 of an empty set");
    const std::size_t c = std::max(class_count(truth), class_count(predicted));
    std::vector<double> tp(c, 0.0), fp(c, 0.0), fn(c, 0.0);
    std::vector<bool> present(c, false);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        present[truth[i]] = true;
        present[predicted[i]] = true;
        if (truth[i] == predicted[i]) {
            tp[truth[i]] += 1.0;
        } else {
            fp[predicted[i]] += 1.0;
            fn[truth[i]] += 1.0;
        }
    }
    double macro = 0.0;
    std::size_t classes = 0;
    double tp_all = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        if (!present[k]) continue;
        ++classes;
        tp_all += tp[k];
        const double denom = 2.0 * tp[k] + fp[k] + fn[k];
        macro += denom > 0.0 ? 2.0 * tp[k] / denom : 0.0;
    }
    return {macro / static_cast<double>(classes), tp_all / static_cast<double>(truth.size())};
}

f1_scores probe_once(const tensor& z, std::span<const std::size_t> labels, const node_split& split,
                     std::uint64_t seed, const probe_options& options) {
    if (labels.size() != z.rows()) throw data_error("label count does not match embedding rows");
    if (split.train.empty() || split.test.empty()) throw data_error("probe needs training and test nodes");
    const std::size_t c = class_count(labels);
    std::vector<bool> in_train(c, false);
    for (std::size_t v : split.train) in_train[labels[v]] = true;
    for (std::size_t k = 0; k < c; ++k) {
        if (!in_train[k]) throw data_error("class " + std::to_string(k) + " absent from the training split");
    }

    std::mt19937_64 rng(seed);
    var w = var::parameter(glorot_init(z.cols(), c, rng));
    var b = var::parameter(tensor::matrix(1, c));
    std::vector<var> params{w, b};

    const var x_train = var::constant(gather_rows(z, split.train));
    std::vector<std::pair<std::size_t, std::size_t>> train_labels;
    for (std::size_t i = 0; i < split.train.size(); ++i) train_labels.emplace_back(i, labels[split.train[i]]);
    tensor mask = tensor::matrix(split.train.size(), c);
    for (const auto& [row, label] : train_labels) mask(row, label) = 1.0;
    const var target = var::constant(std::move(mask));

    const tensor x_val = gather_rows(z, split.val);
    std::vector<std::size_t> val_truth;
    for (std::size_t v : split.val) val_truth.push_back(labels[v]);

    auto predict = [&](const tensor& x) {
        tensor logits = matmul_values(x, w.value());
        for (std::size_t i = 0; i < logits.rows(); ++i)
            for (std::size_t j = 0; j < c; ++j) logits(i, j) += b.value()[j];
        return logits;
    };
    // Validation accuracy, ties broken by validation cross-entropy.
    auto val_score = [&]() -> std::pair<double, double> {
        if (split.val.empty()) return {0.0, 0.0};
        tensor logits = predict(x_val);
        const auto pred = argmax_rows(logits);
        double correct = 0.0;
        double nll = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            correct += pred[i] == val_truth[i] ? 1.0 : 0.0;
            double mx = logits(i, 0);
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
            double total = 0.0;
            for (std::size_t j = 0; j < c; ++j) total += std::exp(logits(i, j) - mx);
            nll += mx + std::log(total) - logits(i, val_truth[i]);
        }
        return {correct / static_cast<double>(pred.size()), nll / static_cast<double>(pred.size())};
    };

    adam_state adam;
    adam.config.lr = options.lr;
    auto best = val_score();
    std::vector<tensor> best_values{w.value(), b.value()};
    std::size_t since_best = 0;
    const double inv_train = 1.0 / static_cast<double>(split.train.size());
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        var logits = bias_add(matmul(x_train, w), b);
        var loss = scale(sum_all(mul(log_softmax(logits), target)), -inv_train);
        for (var& p : params) p.zero_grad();
        backward(loss);
        adam_step(adam, params);

        if (split.val.empty()) continue;
        const auto score = val_score();
        if (score.first > best.first || (score.first == best.first && score.second < best.second)) {
            best = score;
            best_values = {w.value(), b.value()};
            since_best = 0;
        } else if (++since_best >= options.patience) {
            break;
        }
    }
    if (!split.val.empty()) {
        w.value() = best_values[0];
        b.value() = best_values[1];
    }

    const auto pred = argmax_rows(predict(gather_rows(z, split.test)));
    std::vector<std::size_t> truth;
    for (std::size_t v : split.test) truth.push_back(labels[v]);
    return f1(truth, pred);
}

probe_result probe_classify(const tensor& z, std::span<const std::size_t> labels, const split_spec& split,
                            const probe_options& options) {
    std::vector<double> macro;
    std::vector<double> micro;
    std::mt19937_64 split_rng(split.seed);
    for (std::size_t r = 0; r < options.repeats; ++r) {
        const node_split s = draw_split(split, z.rows(), split_rng);
        const f1_scores f = probe_once(z, labels, s, mix_seed(split.seed, r), options);
        macro.push_back(f.macro);
        micro.push_back(f.micro);
    }
    return {summarize(macro), summarize(micro)};
}

kmeans_result kmeans(const tensor& x, std::size_t k, std::mt19937_64& rng, std::size_t max_iterations) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (k == 0) throw usage_error("k-means needs k >= 1");
    if (k > n) throw data_error("k-means with k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " points");

    auto sqdist = [&](std::size_t i, const tensor& c, std::size_t j) {
        double s = 0.0;
        for (std::size_t f = 0; f < d; ++f) {
            const double diff = x(i, f) - c(j, f);
            s += diff * diff;
        }
        return s;
    };

    kmeans_result r;
    r.centroids = tensor::matrix(k, d);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto set_center = [&](std::size_t j, std::size_t i) {
        for (std::size_t f = 0; f < d; ++f) r.centroids(j, f) = x(i, f);
    };
    set_center(0, first(rng));
    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) closest[i] = sqdist(i, r.centroids, 0);
    for (std::size_t j = 1; j < k; ++j) {
        const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
        std::size_t chosen = n - 1;
        if (total > 0.0) {
            double target = unit(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= closest[i];
                if (target < 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = first(rng);
        }
        set_center(j, chosen);
        for (std::size_t i = 0; i < n; ++i) closest[i] = std::min(closest[i], sqdist(i, r.centroids, j));
    }

    r.assignment.assign(n, k);
    for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = sqdist(i, r.centroids, 0);
            for (std::size_t j = 1; j < k; ++j) {
                const double dj = sqdist(i, r.centroids, j);
                if (dj < best_d) {
                    best_d = dj;
                    best = j;
                }
            }
            if (r.assignment[i] != best) {
                r.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) break;

        tensor sums = tensor::matrix(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[r.assignment[i]];
            for (std::size_t f = 0; f < d; ++f) sums(r.assignment[i], f) += x(i, f);
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) {
                // Empty cluster: move it to the point farthest from its centroid.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double di = sqdist(i, r.centroids, r.assignment[i]);
                    if (di > far_d) {
                        far_d = di;
                        far = i;
                    }
                }
                set_center(j, far);
                continue;
            }
            for (std::size_t f = 0; f < d; ++f) r.centroids(j, f) = sums(j, f) / static_cast<double>(counts[j]);
        }
    }
    r.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) r.inertia += sqdist(i, r.centroids, r.assignment[i]);
    return r;
}

double nmi(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
    const auto table = contingency(truth, predicted);
    const double n = static_cast<double>(truth.size());
    std::map<std::size_t, double> a, b;
    for (const auto& [key, count] : table) {
        a[key.first] += count;
        b[key.second] += count;
    }
    auto entropy = [n](const std::map<std::size_t, double>& m) {
        double h = 0.0;
        for (const auto& [_, c] : m) h -= (c / n) * std::log(c / n);
        return h;
    };
    const double ha = entropy(a);
    const double hb = entropy(b);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    double mi = 0.0;
    for (const auto& [key, c] : table) mi += (c / n) * std::log(c * n / (a[key.first] * b[key.second]));
    const double value = mi / ((ha + hb) / 2.0);
    return std::clamp(value, 0.0, 1.0);
}

double ari(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
    const auto table = contingency(truth, predicted);
    const double n = static_cast<double>(truth.size());
    std::map<std::size_t, double> a, b;
    double index = 0.0;
    for (const auto& [key, count] : table) {
        a[key.first] += count;
        b[key.second] += count;
        index += choose2(count);
    }
    double sum_a = 0.0, sum_b = 0.0;
    for (const auto& [_, c] : a) sum_a += choose2(c);
    for (const auto& [_, c] : b) sum_b += choose2(c);
    const double expected = sum_a * sum_b / choose2(n);
    const double max_index = (sum_a + sum_b) / 2.0;
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

cluster_result cluster_eval(const tensor& z, std::span<const std::size_t> labels, std::size_t k,
                            std::uint64_t seed, std::size_t restarts) {
    if (k < 2) throw usage_error("clustering needs K >= 2");
    if (labels.size() != z.rows()) throw data_error("label count does not match embedding rows");
    if (k > z.rows()) throw data_error("K=" + std::to_string(k) + " exceeds node count " + std::to_string(z.rows()));
    std::vector<double> nmis;
    std::vector<double> aris;
    for (std::size_t r = 0; r < restarts; ++r) {
        std::mt19937_64 rng(mix_seed(seed, r));
        const auto km = kmeans(z, k, rng);
        nmis.push_back(nmi(labels, km.assignment));
        aris.push_back(ari(labels, km.assignment));
    }
    return {summarize(nmis), summarize(aris)};
}

std::vector<metapath_graph> edge_mask::residual_graphs() const {
    std::vector<metapath_graph> out;
    for (const auto& s : per_path) out.push_back(s.residual);
    return out;
}

std::vector<edge> edge_mask::residual_edges() const {
    std::unordered_set<std::uint64_t> seen;
    std::vector<edge> out;
    for (const auto& s : per_path) {
        for (const auto& e : s.residual.undirected_edges()) {
            if (seen.insert(pair_key(e.src, e.dst)).second) out.push_back(e);
        }
    }
    return out;
}

edge_mask mask_edges(std::span<const metapath_graph> graphs, const mask_fractions& fractions, std::uint64_t seed) {
    if (!(fractions.test >= 0.0 && fractions.val >= 0.0 && fractions.test + fractions.val <= 1.0)) {
        throw usage_error("mask fractions must be non-negative and sum to at most 1");
    }
    edge_mask mask;
    for (std::size_t p = 0; p < graphs.size(); ++p) {
        const metapath_graph& g = graphs[p];
        std::mt19937_64 rng(mix_seed(seed, p));
        std::vector<edge> edges = g.undirected_edges();
        const std::size_t m = edges.size();
        if (m < 20) {
            throw data_error("meta-path '" + g.spec().name + "' has " + std::to_string(m) +
                             " edges; masking needs at least 20");
        }
        for (std::size_t i = m; i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(edges[i - 1], edges[pick(rng)]);
        }
        const double md = static_cast<double>(m);
        const auto held = static_cast<std::size_t>(std::llround(md * (fractions.test + fractions.val)));
        const auto n_val = static_cast<std::size_t>(std::floor(md * fractions.val + 1e-9));
        const std::size_t n_test = held - n_val;

        edge_split s;
        s.val_pos.assign(edges.begin(), edges.begin() + n_val);
        s.test_pos.assign(edges.begin() + n_val, edges.begin() + held);
        std::vector<edge> kept(edges.begin() + held, edges.end());

        // Keep diagonal entries in the residual graph.
        std::vector<std::vector<node_index>> rows(g.size());
        for (node_index v = 0; v < g.size(); ++v)
            if (g.has_edge(v, v)) rows[v].push_back(v);
        for (const auto& e : kept) {
            rows[e.src].push_back(e.dst);
            rows[e.dst].push_back(e.src);
        }
        s.residual = metapath_graph(g.spec(), std::move(rows));

        // Negatives: distinct non-edges, never self pairs.
        const std::size_t n = g.size();
        const std::size_t needed = n_test + n_val;
        const std::size_t total_pairs = n * (n - 1) / 2;
        const std::size_t available = total_pairs - m;
        if (available < needed) {
            throw data_error("meta-path '" + g.spec().name + "' has too few non-edges for negative sampling");
        }
        std::vector<edge> negatives;
        if (needed * 2 > available) {
            std::vector<edge> pool;
            for (node_index v = 0; v < n; ++v)
                for (node_index u = v + 1; u < n; ++u)
                    if (!g.has_edge(v, u)) pool.push_back({v, u});
            for (std::size_t i = 0; i < needed; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
                std::swap(pool[i], pool[pick(rng)]);
            }
            negatives.assign(pool.begin(), pool.begin() + needed);
        } else {
            std::unordered_set<std::uint64_t> chosen;
            std::uniform_int_distribution<node_index> pick(0, static_cast<node_index>(n - 1));
            while (negatives.size() < needed) {
                node_index a = pick(rng);
                node_index b = pick(rng);
                if (a == b || g.has_edge(a, b)) continue;
                if (!chosen.insert(pair_key(a, b)).second) continue;
                negatives.push_back({std::min(a, b), std::max(a, b)});
            }
        }
        s.val_neg.assign(negatives.begin(), negatives.begin() + n_val);
        s.test_neg.assign(negatives.begin() + n_val, negatives.end());
        mask.per_path.push_back(std::move(s));
    }
    return mask;
}

double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
    const std::size_t np = positive_scores.size();
    const std::size_t nn = negative_scores.size();
    if (np == 0 || nn == 0) throw data_error("AUC needs positive and negative scores");
    std::vector<std::pair<double, bool>> all;
    all.reserve(np + nn);
    for (double s : positive_scores) all.emplace_back(s, true);
    for (double s : negative_scores) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t)
            if (all[t].second) rank_sum += midrank;
        i = j;
    }
    const double dp = static_cast<double>(np);
    return (rank_sum - dp * (dp + 1.0) / 2.0) / (dp * static_cast<double>(nn));
}

double average_precision(std::span<const double> positive_scores, std::span<const double> negative_scores) {
    const std::size_t np = positive_scores.size();
    if (np == 0 || negative_scores.empty()) throw data_error("AP needs positive and negative scores");
    std::vector<std::pair<double, bool>> all;
    for (double s : positive_scores) all.emplace_back(s, true);
    for (double s : negative_scores) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) {
            (all[j].second ? tp : fp) += 1.0;
            ++j;
        }
        const double recall = tp / static_cast<double>(np);
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
        i = j;
    }
    return ap;
}

link_metrics link_eval(const tensor& z, const edge_mask& mask) {
    if (mask.per_path.empty()) throw data_error("edge mask has no meta-paths");
    auto score = [&](const edge& e) {
        double s = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) s += z(e.src, j) * z(e.dst, j);
        return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
    };
    link_metrics out;
    for (const auto& s : mask.per_path) {
        std::vector<double> pos, negs;
        for (const auto& e : s.test_pos) pos.push_back(score(e));
        for (const auto& e : s.test_neg) negs.push_back(score(e));
        out.names.push_back(s.residual.spec().name);
        out.auc.push_back(roc_auc(pos, negs));
        out.ap.push_back(average_precision(pos, negs));
    }
    out.mean_auc = std::accumulate(out.auc.begin(), out.auc.end(), 0.0) / static_cast<double>(out.auc.size());
    out.mean_ap = std::accumulate(out.ap.begin(), out.ap.end(), 0.0) / static_cast<double>(out.ap.size());
    return out;
}

void write_metrics_tsv(std::ostream& out, std::span<const metric_row> rows) {
    for (const auto& r : rows) {
        out << r.task << '\t' << r.metric << '\t' << r.scope << '\t' << format_double(r.value) << '\t'
            << format_double(r.stddev) << '\n';
    }
}

std::vector<metric_row> read_metrics_tsv(std::istream& in) {
    std::vector<metric_row> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() != 5) throw data_error("metrics line " + std::to_string(lineno) + " needs 5 fields");
        rows.push_back({f[0], f[1], f[2], parse_double(f[3], "value"), parse_double(f[4], "stddev")});
    }
    return rows;
}

}  // namespace hemi

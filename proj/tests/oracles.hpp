#pragma once

// Brute-force reference implementations for the evaluation metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <vector>

namespace hemi::testing {

/// Fraction of positive/negative pairs ranked correctly, ties counting one half.
inline double auc_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
    double wins = 0.0;
    for (double p : pos)
        for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    return wins / static_cast<double>(pos.size() * neg.size());
}

/// Sum over distinct thresholds t (descending) of precision(t) times the recall gained at t.
inline double ap_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
    std::set<double, std::greater<>> thresholds(pos.begin(), pos.end());
    thresholds.insert(neg.begin(), neg.end());
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (double p : pos) tp += p >= t;
        for (double n : neg) fp += n >= t;
        const double recall = tp / static_cast<double>(pos.size());
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    return ap;
}

/// Pair-counting adjusted Rand index over all n(n-1)/2 pairs.
inline double ari_oracle(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double both = 0.0, only_a = 0.0, only_b = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            both += sa && sb;
            only_a += sa;
            only_b += sb;
            pairs += 1.0;
        }
    const double expected = only_a * only_b / pairs;
    const double max_index = (only_a + only_b) / 2.0;
    if (max_index == expected) return 1.0;
    return (both - expected) / (max_index - expected);
}

/// I(a; b) / ((H(a) + H(b)) / 2) from the joint distribution.
inline double nmi_oracle(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const double n = static_cast<double>(a.size());
    std::map<std::size_t, double> pa, pb;
    std::map<std::pair<std::size_t, std::size_t>, double> pab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        pa[a[i]] += 1.0 / n;
        pb[b[i]] += 1.0 / n;
        pab[{a[i], b[i]}] += 1.0 / n;
    }
    double ha = 0.0, hb = 0.0, mi = 0.0;
    for (auto [k, p] : pa) ha -= p * std::log(p);
    for (auto [k, p] : pb) hb -= p * std::log(p);
    for (auto [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    if (ha + hb == 0.0) return 1.0;
    return mi / ((ha + hb) / 2.0);
}

/// Per-class F1 averaged over classes that occur in truth or prediction.
inline double macro_f1_oracle(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred) {
    std::set<std::size_t> classes(truth.begin(), truth.end());
    classes.insert(pred.begin(), pred.end());
    double total = 0.0;
    for (std::size_t c : classes) {
        double tp = 0.0, fp = 0.0, fn = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            tp += truth[i] == c && pred[i] == c;
            fp += truth[i] != c && pred[i] == c;
            fn += truth[i] == c && pred[i] != c;
        }
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        total += precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    return total / static_cast<double>(classes.size());
}

}  // namespace hemi::testing

#include "hemi/model.hpp"

#include "hemi/kv.hpp"
#include "hemi/error.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace hemi {

void hemi_config::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw usage_error("lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
    if (d == 0 || d_m == 0) throw usage_error("embedding and attention dimensions must be positive");
    if (layers < 1 || layers > 2) throw usage_error("encoder layer count must be 1 or 2");
    if (!(lr >= 0.0)) throw usage_error("learning rate must be non-negative");
    if (clip_norm < 0.0) throw usage_error("clip_norm must be non-negative");
}

model_params model_params::init(std::size_t metapaths, std::size_t d_in, const hemi_config& cfg,
                                std::mt19937_64& rng) {
    cfg.validate();
    if (metapaths == 0) throw usage_error("at least one meta-path is required");
    if (d_in == 0) throw usage_error("feature dimension must be positive");

    model_params p;
    p.metapaths = metapaths;
    p.d_in = d_in;
    p.d = cfg.d;
    p.d_m = cfg.d_m;

    const std::size_t n_enc = cfg.shared_encoder ? 1 : metapaths;
    for (std::size_t j = 0; j < n_enc; ++j) {
        encoder_params enc;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::size_t in = l == 0 ? d_in : cfg.d;
            enc.weights.push_back(var::parameter(glorot_init(in, cfg.d, rng)));
            enc.slopes.push_back(var::parameter(tensor::scalar(cfg.prelu_init)));
        }
        p.encoders.push_back(std::move(enc));
    }
    p.w_sem = var::parameter(glorot_init(cfg.d_m, cfg.d, rng));
    p.bias = var::parameter(tensor::matrix(1, cfg.d_m));
    p.q = var::parameter(glorot_init(cfg.d_m, 1, rng));
    const std::size_t n_disc = cfg.shared_discriminator ? 1 : metapaths;
    for (std::size_t j = 0; j < n_disc; ++j) {
        p.w_fine.push_back(var::parameter(glorot_init(cfg.d, cfg.d, rng)));
        p.w_coarse.push_back(var::parameter(glorot_init(cfg.d, cfg.d, rng)));
    }
    return p;
}

std::vector<std::pair<std::string, var>> model_params::named() const {
    std::vector<std::pair<std::string, var>> out;
    for (std::size_t j = 0; j < encoders.size(); ++j) {
        for (std::size_t l = 0; l < encoders[j].weights.size(); ++l) {
            const std::string prefix = "encoder" + std::to_string(j) + ".layer" + std::to_string(l);
            out.emplace_back(prefix + ".weight", encoders[j].weights[l]);
            out.emplace_back(prefix + ".slope", encoders[j].slopes[l]);
        }
    }
    out.emplace_back("attention.w_sem", w_sem);
    out.emplace_back("attention.bias", bias);
    out.emplace_back("attention.q", q);
    for (std::size_t j = 0; j < w_fine.size(); ++j) out.emplace_back("disc_fine" + std::to_string(j), w_fine[j]);
    for (std::size_t j = 0; j < w_coarse.size(); ++j)
        out.emplace_back("disc_coarse" + std::to_string(j), w_coarse[j]);
    return out;
}

std::vector<var> model_params::all() const {
    std::vector<var> out;
    for (auto& [name, v] : named()) out.push_back(v);
    return out;
}

model_params model_params::clone() const {
    auto copy = [](const var& v) { return var::parameter(v.value()); };
    model_params p = *this;
    for (auto& enc : p.encoders) {
        for (auto& w : enc.weights) w = copy(w);
        for (auto& s : enc.slopes) s = copy(s);
    }
    p.w_sem = copy(w_sem);
    p.bias = copy(bias);
    p.q = copy(q);
    for (auto& w : p.w_fine) w = copy(w);
    for (auto& w : p.w_coarse) w = copy(w);
    return p;
}

void model_params::zero_grad() {
    for (var v : all()) v.zero_grad();
}

sparse_matrix gcn_normalize(const metapath_graph& mpg) {
    const std::size_t n = mpg.size();
    std::vector<std::vector<node_index>> rows(n);
    for (node_index v = 0; v < n; ++v) rows[v] = metapath_neighbors(mpg, v);
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t v = 0; v < n; ++v) inv_sqrt_deg[v] = 1.0 / std::sqrt(static_cast<double>(rows[v].size()));
    std::vector<sparse_matrix::entry> entries;
    for (std::size_t v = 0; v < n; ++v) {
        for (node_index u : rows[v]) entries.push_back({v, u, inv_sqrt_deg[v] * inv_sqrt_deg[u]});
    }
    return sparse_matrix(n, n, entries);
}

var encode_metapath(const sparse_matrix& norm_adj, const var& x, const var& w, const var& slope) {
    if (x.rows() != norm_adj.cols()) {
        throw numeric_error("encoder input has " + std::to_string(x.rows()) + " rows, adjacency is " +
                            std::to_string(norm_adj.rows()) + "x" + std::to_string(norm_adj.cols()));
    }
    if (x.cols() != w.rows()) {
        throw numeric_error("encoder shape mismatch: features " + shape_string(x.shape()) + " vs weight " +
                            shape_string(w.shape()));
    }
    // Project first when that shrinks the propagated width.
    var h = w.cols() <= x.cols() ? spmm(norm_adj, matmul(x, w)) : matmul(spmm(norm_adj, x), w);
    return prelu(h, slope);
}

var encode(const sparse_matrix& norm_adj, const var& x, const encoder_params& enc) {
    var h = x;
    for (std::size_t l = 0; l < enc.weights.size(); ++l) h = encode_metapath(norm_adj, h, enc.weights[l], enc.slopes[l]);
    return h;
}

var summary(const var& z) { return sigmoid(mean_rows(z)); }

fusion_result fuse(std::span<const var> per_path, const var& w_sem, const var& bias, const var& q) {
    if (per_path.empty()) throw numeric_error("fuse needs at least one meta-path");
    const var w_sem_t = transpose(w_sem);
    std::vector<var> scores;
    scores.reserve(per_path.size());
    for (const var& z : per_path) {
        if (z.shape() != per_path[0].shape()) {
            throw numeric_error("fuse shape mismatch: " + shape_string(per_path[0].shape()) + " vs " +
                                shape_string(z.shape()));
        }
        scores.push_back(mean_all(matmul(bias_add(matmul(z, w_sem_t), bias), q)));
    }
    fusion_result out;
    out.scores = concat_cols(scores);
    out.beta = softmax(out.scores);
    out.fused = scale_by(per_path[0], element(out.beta, 0, 0));
    for (std::size_t j = 1; j < per_path.size(); ++j) {
        out.fused = add(out.fused, scale_by(per_path[j], element(out.beta, 0, j)));
    }
    return out;
}

std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    return perm;
}

tensor permute_rows(const tensor& x, std::span<const std::size_t> perm) {
    const std::size_t r = x.rows();
    const std::size_t c = x.cols();
    if (perm.size() != r) throw numeric_error("permutation length does not match row count");
    tensor out = tensor::matrix(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) = x(perm[i], j);
    return out;
}

tensor corrupt(const tensor& x, std::mt19937_64& rng) {
    const auto perm = random_permutation(x.rows(), rng);
    return permute_rows(x, perm);
}

var fine_logits(const var& z_path, const var& z_fused, const var& w) {
    return rows_dot(matmul(z_path, w), z_fused);
}

var coarse_logits(const var& s, const var& z_fused, const var& w) {
    return matmul(z_fused, transpose(matmul(s, w)));
}

namespace {

double bilinear(std::span<const double> a, std::span<const double> b, const tensor& w) {
    if (w.rows() != a.size() || w.cols() != b.size()) {
        throw numeric_error("discriminator shape mismatch: vectors of length " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()) + " with weight " + shape_string(w.shape()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) continue;
        double inner = 0.0;
        for (std::size_t j = 0; j < b.size(); ++j) inner += w(i, j) * b[j];
        total += a[i] * inner;
    }
    return total;
}

double probability(double logit) {
    return logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
}

}  // namespace

double disc_fine(std::span<const double> z_path_row, std::span<const double> z_fused_row, const tensor& w) {
    return probability(bilinear(z_path_row, z_fused_row, w));
}

double disc_coarse(std::span<const double> s, std::span<const double> z_fused_row, const tensor& w) {
    return probability(bilinear(s, z_fused_row, w));
}

embedding_set forward(const model_params& params, std::span<const sparse_matrix> adjacency,
                      std::span<const var> features) {
    if (adjacency.size() != params.metapaths) {
        throw numeric_error("model built for " + std::to_string(params.metapaths) + " meta-paths, got " +
                            std::to_string(adjacency.size()) + " adjacencies");
    }
    if (features.size() != 1 && features.size() != adjacency.size()) {
        throw numeric_error("need one feature matrix or one per meta-path");
    }
    embedding_set out;
    for (std::size_t j = 0; j < adjacency.size(); ++j) {
        const var& x = features[features.size() == 1 ? 0 : j];
        out.per_path.push_back(encode(adjacency[j], x, params.encoder(j)));
        out.summaries.push_back(summary(out.per_path.back()));
    }
    auto f = fuse(out.per_path, params.w_sem, params.bias, params.q);
    out.scores = f.scores;
    out.beta = f.beta;
    out.fused = f.fused;
    return out;
}

embedding_set forward(const model_params& params, std::span<const sparse_matrix> adjacency, const var& features) {
    return forward(params, adjacency, std::span<const var>(&features, 1));
}

var hemi_loss(const embedding_set& clean, const var& corrupted_fused, const model_params& params, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw usage_error("lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
    if (corrupted_fused.shape() != clean.fused.shape()) {
        throw numeric_error("corrupted representation " + shape_string(corrupted_fused.shape()) +
                            " does not match clean " + shape_string(clean.fused.shape()));
    }
    const std::size_t m = clean.per_path.size();
    var fine_total;
    var coarse_total;
    for (std::size_t j = 0; j < m; ++j) {
        // -E[log sigma(pos)] - E[log(1 - sigma(neg))]
        var f_pos = mean_all(log_sigmoid(fine_logits(clean.per_path[j], clean.fused, params.fine(j))));
        var f_neg = mean_all(log_sigmoid(neg(fine_logits(clean.per_path[j], corrupted_fused, params.fine(j)))));
        var c_pos = mean_all(log_sigmoid(coarse_logits(clean.summaries[j], clean.fused, params.coarse(j))));
        var c_neg = mean_all(log_sigmoid(neg(coarse_logits(clean.summaries[j], corrupted_fused, params.coarse(j)))));
        var f = add(f_pos, f_neg);
        var c = add(c_pos, c_neg);
        fine_total = j == 0 ? f : add(fine_total, f);
        coarse_total = j == 0 ? c : add(coarse_total, c);
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    return add(scale(fine_total, -lambda * inv_m), scale(coarse_total, -(1.0 - lambda) * inv_m));
}

void save_checkpoint(const std::filesystem::path& dir, const model_params& params,
                     std::span<const std::string> metapaths, const hemi_config& cfg) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw data_error("cannot write checkpoint manifest in " + dir.string());
    std::string names;
    for (std::size_t j = 0; j < metapaths.size(); ++j) names += (j ? "," : "") + metapaths[j];
    manifest << "metapaths = " << names << '\n'
             << "d_in = " << params.d_in << '\n'
             << "d = " << params.d << '\n'
             << "d_m = " << params.d_m << '\n'
             << "lambda = " << format_double(cfg.lambda) << '\n'
             << "layers = " << params.encoders.front().weights.size() << '\n'
             << "shared_encoder = " << (params.encoders.size() == 1 && params.metapaths > 1 ? "true" : "false")
             << '\n'
             << "shared_discriminator = "
             << (params.w_fine.size() == 1 && params.metapaths > 1 ? "true" : "false") << '\n'
             << "seed = " << cfg.seed << '\n';
    for (const auto& [name, v] : params.named()) save_tensor(dir / (name + ".bin"), v.value());
}

checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw data_error("no checkpoint manifest in " + dir.string());
    const key_values kv = parse_key_values(in, (dir / "manifest.txt").string());

    checkpoint ck;
    ck.metapaths = split_list(kv.get("metapaths"));
    ck.config.d = kv.get_size("d");
    ck.config.d_m = kv.get_size("d_m");
    ck.config.lambda = kv.get_double("lambda");
    ck.config.layers = kv.get_size("layers");
    ck.config.shared_encoder = kv.get_bool("shared_encoder");
    ck.config.shared_discriminator = kv.get_bool("shared_discriminator");
    ck.config.seed = kv.get_size("seed");
    const std::size_t d_in = kv.get_size("d_in");

    std::mt19937_64 rng(0);
    ck.params = model_params::init(ck.metapaths.size(), d_in, ck.config, rng);
    for (auto& [name, v] : ck.params.named()) {
        tensor t = load_tensor(dir / (name + ".bin"));
        if (t.shape() != v.shape()) {
            throw data_error("checkpoint tensor " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                             shape_string(v.shape()));
        }
        v.value() = std::move(t);
    }
    return ck;
}

}  // namespace hemi

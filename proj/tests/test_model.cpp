#include "doctest.h"

#include "hemi/error.hpp"
#include "hemi/model.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace hemi;
using doctest::Approx;

namespace {

const double sigmoid1 = 1.0 / (1.0 + std::exp(-1.0));

metapath_graph graph_of(std::size_t n, std::vector<edge> edges) {
    return metapath_graph::from_edges({"g", {}}, n, edges);
}

// Random 6-node instance with two meta-path graphs and 4 input features.
struct small_instance {
    std::vector<sparse_matrix> adjacency;
    tensor x;
    tensor x_corrupt;
    model_params params;
};

small_instance make_small(const hemi_config& cfg, std::uint64_t seed = 1) {
    small_instance s;
    s.adjacency.push_back(gcn_normalize(graph_of(6, {{0, 1}, {1, 2}, {3, 4}, {4, 5}, {0, 2}})));
    s.adjacency.push_back(gcn_normalize(graph_of(6, {{0, 3}, {1, 4}, {2, 5}, {5, 5}})));
    std::mt19937_64 rng(seed);
    s.x = testing::random_matrix(6, 4, rng);
    s.x_corrupt = permute_rows(s.x, std::vector<std::size_t>{3, 0, 5, 1, 2, 4});
    s.params = model_params::init(2, 4, cfg, rng);
    return s;
}

var loss_of(const small_instance& s, double lambda) {
    const embedding_set clean = forward(s.params, s.adjacency, var::constant(s.x));
    const embedding_set bad = forward(s.params, s.adjacency, var::constant(s.x_corrupt));
    return hemi_loss(clean, bad.fused, s.params, lambda);
}

}  // namespace

TEST_CASE("gcn_normalize examples") {
    CHECK(gcn_normalize(graph_of(2, {})).to_dense() == tensor::identity(2));

    const tensor pair = gcn_normalize(graph_of(2, {{0, 1}})).to_dense();
    for (double v : pair.values()) CHECK(v == Approx(0.5));

    const tensor tri = gcn_normalize(graph_of(3, {{0, 1}, {1, 2}, {0, 2}})).to_dense();
    for (double v : tri.values()) CHECK(v == Approx(1.0 / 3.0));

    // Stored self-loops are not counted twice.
    const tensor loop = gcn_normalize(graph_of(2, {{0, 0}})).to_dense();
    CHECK(loop == tensor::identity(2));
}

TEST_CASE("encode_metapath examples") {
    const var slope = var::constant(tensor::scalar(0.25));
    SUBCASE("identity adjacency and weight pass nonnegative inputs through") {
        const tensor x = tensor::matrix(3, 2, {0.5, 1.0, 0.0, 2.0, 3.0, 0.25});
        const var z = encode_metapath(sparse_matrix::identity(3), var::constant(x), var::constant(tensor::identity(2)), slope);
        CHECK(z.value() == x);
    }
    SUBCASE("zero features give zero output") {
        std::mt19937_64 rng(1);
        const var z = encode_metapath(gcn_normalize(graph_of(3, {{0, 1}})), var::constant(tensor::matrix(3, 2)),
                                      var::constant(testing::random_matrix(2, 5, rng)), slope);
        for (double v : z.value().values()) CHECK(v == 0.0);
    }
    SUBCASE("two-node path with identity features") {
        const var z = encode_metapath(gcn_normalize(graph_of(2, {{0, 1}})), var::constant(tensor::identity(2)),
                                      var::constant(tensor::identity(2)), slope);
        for (double v : z.value().values()) CHECK(v == Approx(0.5));
    }
    SUBCASE("negative pre-activations use the slope") {
        const var z = encode_metapath(sparse_matrix::identity(1), var::constant(tensor::row({-4.0})),
                                      var::constant(tensor::identity(1)), slope);
        CHECK(z.item() == Approx(-1.0));
    }
    SUBCASE("with identity adjacency, permuting input rows permutes output rows") {
        std::mt19937_64 rng(2);
        const tensor x = testing::random_matrix(5, 3, rng);
        const var w = var::constant(testing::random_matrix(3, 4, rng));
        const std::vector<std::size_t> perm{4, 2, 0, 1, 3};
        const tensor z = encode_metapath(sparse_matrix::identity(5), var::constant(x), w, slope).value();
        const tensor zp = encode_metapath(sparse_matrix::identity(5), var::constant(permute_rows(x, perm)), w, slope).value();
        CHECK(zp == permute_rows(z, perm));
    }
}

TEST_CASE("summary examples") {
    const var zero = summary(var::constant(tensor::matrix(4, 3)));
    for (double v : zero.value().values()) CHECK(v == 0.5);

    const var cancel = summary(var::constant(tensor::matrix(2, 2, {1.5, -2.0, -1.5, 2.0})));
    for (double v : cancel.value().values()) CHECK(v == Approx(0.5));

    const var one = summary(var::constant(tensor::matrix(1, 3, 1.0)));
    for (double v : one.value().values()) CHECK(v == Approx(sigmoid1).epsilon(1e-12));
}

TEST_CASE("fuse examples") {
    std::mt19937_64 rng(4);
    const var w_sem = var::constant(testing::random_matrix(3, 4, rng));
    const var bias = var::constant(testing::random_matrix(1, 3, rng));
    const var q = var::constant(testing::random_matrix(3, 1, rng));
    const var z1 = var::constant(testing::random_matrix(5, 4, rng));
    const var z2 = var::constant(testing::random_matrix(5, 4, rng));

    SUBCASE("a single meta-path has weight one") {
        const std::vector<var> parts{z1};
        const auto f = fuse(parts, w_sem, bias, q);
        CHECK(f.beta.value()[0] == Approx(1.0));
        for (std::size_t i = 0; i < z1.value().size(); ++i) CHECK(f.fused.value()[i] == Approx(z1.value()[i]));
    }
    SUBCASE("identical inputs split evenly") {
        const std::vector<var> parts{z1, z1};
        const auto f = fuse(parts, w_sem, bias, q);
        CHECK(f.beta.value()[0] == Approx(0.5));
        CHECK(f.beta.value()[1] == Approx(0.5));
        for (std::size_t i = 0; i < z1.value().size(); ++i) CHECK(f.fused.value()[i] == Approx(z1.value()[i]));
    }
    SUBCASE("scores [ln 2, 0] give beta [2/3, 1/3]") {
        // W_sem = I (d_m = d = 1), b = 0, q = 1: e_j is the mean of Z^j.
        const var one = var::constant(tensor::identity(1));
        const var zero_b = var::constant(tensor::matrix(1, 1));
        const var a = var::constant(tensor::matrix(2, 1, {std::log(2.0) - 1.0, std::log(2.0) + 1.0}));
        const var b = var::constant(tensor::matrix(2, 1, {-3.0, 3.0}));
        const std::vector<var> parts{a, b};
        const auto f = fuse(parts, one, zero_b, one);
        CHECK(f.scores.value()[0] == Approx(std::log(2.0)));
        CHECK(f.scores.value()[1] == Approx(0.0));
        CHECK(f.beta.value()[0] == Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(f.beta.value()[1] == Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("beta sums to one and fused rows lie between the inputs") {
        const std::vector<var> parts{z1, z2};
        const auto f = fuse(parts, w_sem, bias, q);
        CHECK(std::abs(f.beta.value()[0] + f.beta.value()[1] - 1.0) < 1e-12);
        CHECK(f.beta.value()[0] > 0.0);
        CHECK(f.beta.value()[1] > 0.0);
        for (std::size_t i = 0; i < z1.value().size(); ++i) {
            const double lo = std::min(z1.value()[i], z2.value()[i]);
            const double hi = std::max(z1.value()[i], z2.value()[i]);
            CHECK(f.fused.value()[i] >= lo - 1e-12);
            CHECK(f.fused.value()[i] <= hi + 1e-12);
        }
    }
    SUBCASE("adding a constant to every score leaves beta unchanged") {
        const std::vector<var> parts{z1, z2};
        const auto f = fuse(parts, w_sem, bias, q);
        const var shifted_bias = var::constant(tensor::matrix(1, 3, {bias.value()[0] + 10.0, bias.value()[1] - 4.0,
                                                                     bias.value()[2] + 2.5}));
        const auto g = fuse(parts, w_sem, shifted_bias, q);
        CHECK(g.beta.value()[0] == Approx(f.beta.value()[0]).epsilon(1e-12));
        CHECK(g.beta.value()[1] == Approx(f.beta.value()[1]).epsilon(1e-12));
    }
}

TEST_CASE("corruption permutes rows") {
    std::mt19937_64 rng(8);
    const tensor x = testing::random_matrix(7, 3, rng);
    const tensor y = corrupt(x, rng);
    auto sorted_rows = [](const tensor& t) {
        std::vector<std::vector<double>> rows;
        for (std::size_t r = 0; r < t.rows(); ++r) rows.emplace_back(t.row_span(r).begin(), t.row_span(r).end());
        std::sort(rows.begin(), rows.end());
        return rows;
    };
    CHECK(sorted_rows(x) == sorted_rows(y));

    const std::vector<std::size_t> identity{0, 1, 2, 3, 4, 5, 6};
    CHECK(permute_rows(x, identity) == x);

    const tensor small = tensor::matrix(3, 1, {1.0, 2.0, 3.0});
    std::mt19937_64 a(123), b(123);
    CHECK(corrupt(small, a) == corrupt(small, b));
}

TEST_CASE("random_permutation is a permutation") {
    std::mt19937_64 rng(10);
    auto p = random_permutation(50, rng);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);
}

TEST_CASE("discriminator examples") {
    const tensor w = tensor::identity(3);
    const std::vector<double> zero{0.0, 0.0, 0.0}, e1{1.0, 0.0, 0.0}, e2{0.0, 1.0, 0.0};
    for (auto fn : {disc_fine, disc_coarse}) {
        CHECK(fn(zero, e1, w) == 0.5);
        CHECK(fn(e1, zero, w) == 0.5);
        CHECK(fn(e1, e1, w) == Approx(sigmoid1).epsilon(1e-12));
        CHECK(fn(e1, e2, w) == 0.5);
    }
    CHECK_THROWS_AS(disc_fine(e1, std::vector<double>{1.0}, w), numeric_error);
}

TEST_CASE("hemi_loss identities") {
    hemi_config cfg;
    cfg.d = 5;
    cfg.d_m = 3;

    SUBCASE("zero logits give 2 ln 2") {
        auto s = make_small(cfg);
        for (auto& w : s.params.w_fine) w.value().fill(0.0);
        for (auto& w : s.params.w_coarse) w.value().fill(0.0);
        for (double lambda : {0.0, 0.3, 1.0}) CHECK(std::abs(loss_of(s, lambda).item() - 2.0 * std::log(2.0)) < 1e-9);
    }
    SUBCASE("identity corruption with zero logits sits at 2 ln 2") {
        auto s = make_small(cfg);
        s.x_corrupt = s.x;
        for (auto& w : s.params.w_fine) w.value().fill(0.0);
        for (auto& w : s.params.w_coarse) w.value().fill(0.0);
        CHECK(loss_of(s, 0.5).item() == Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("lambda = 1 leaves coarse discriminators without gradient") {
        auto s = make_small(cfg);
        backward(loss_of(s, 1.0));
        for (const auto& w : s.params.w_coarse)
            for (double g : w.grad().values()) CHECK(g == 0.0);
        double fine = 0.0;
        for (const auto& w : s.params.w_fine)
            for (double g : w.grad().values()) fine += std::abs(g);
        CHECK(fine > 0.0);
    }
    SUBCASE("lambda = 0 leaves fine discriminators without gradient") {
        auto s = make_small(cfg);
        backward(loss_of(s, 0.0));
        for (const auto& w : s.params.w_fine)
            for (double g : w.grad().values()) CHECK(g == 0.0);
    }
    SUBCASE("perfect discrimination drives the loss to zero") {
        // Constant embeddings with a sign-flipped corrupted view: every logit is +-500.
        auto s = make_small(cfg);
        for (auto& w : s.params.w_fine) w.value() = tensor::identity(cfg.d);
        for (auto& w : s.params.w_coarse) w.value() = tensor::identity(cfg.d);
        embedding_set pos;
        pos.per_path = {var::constant(tensor::matrix(6, 5, 10.0)), var::constant(tensor::matrix(6, 5, 10.0))};
        pos.summaries = {var::constant(tensor::matrix(1, 5, 10.0)), var::constant(tensor::matrix(1, 5, 10.0))};
        pos.fused = var::constant(tensor::matrix(6, 5, 10.0));
        const var loss = hemi_loss(pos, var::constant(tensor::matrix(6, 5, -10.0)), s.params, 0.5);
        CHECK(loss.item() < 1e-12);
        CHECK(loss.item() >= 0.0);
    }
    SUBCASE("lambda outside [0, 1] is rejected") {
        auto s = make_small(cfg);
        CHECK_THROWS_AS(loss_of(s, 1.5), usage_error);
        CHECK_THROWS_AS(loss_of(s, -0.1), usage_error);
    }
}

TEST_CASE("hemi_loss gradients match central differences for every group") {
    for (bool two_layers : {false, true}) {
        hemi_config cfg;
        cfg.d = 5;
        cfg.d_m = 3;
        cfg.layers = two_layers ? 2 : 1;
        auto s = make_small(cfg, 21);
        for (const auto& [name, p] : s.params.named()) {
            CAPTURE(name);
            CHECK(testing::gradient_error([&] { return loss_of(s, 0.4); }, p) < 1e-4);
        }
    }
}

TEST_CASE("shared modes use one encoder or one discriminator pair") {
    hemi_config cfg;
    cfg.d = 4;
    cfg.d_m = 2;
    cfg.shared_encoder = true;
    cfg.shared_discriminator = true;
    std::mt19937_64 rng(1);
    const auto p = model_params::init(3, 6, cfg, rng);
    CHECK(p.encoders.size() == 1);
    CHECK(p.w_fine.size() == 1);
    CHECK(p.w_coarse.size() == 1);
    CHECK(p.encoder(2).weights[0].value() == p.encoder(0).weights[0].value());
    CHECK(p.named().size() == 2 + 3 + 2);
}

TEST_CASE("hemi_config validation") {
    hemi_config cfg;
    cfg.lambda = 2.0;
    CHECK_THROWS_AS(cfg.validate(), usage_error);
    cfg.lambda = 0.5;
    cfg.layers = 3;
    CHECK_THROWS_AS(cfg.validate(), usage_error);
    cfg.layers = 1;
    cfg.d = 0;
    CHECK_THROWS_AS(cfg.validate(), usage_error);
}

TEST_CASE("checkpoint round trip") {
    hemi_config cfg;
    cfg.d = 4;
    cfg.d_m = 2;
    cfg.lambda = 0.25;
    cfg.seed = 99;
    std::mt19937_64 rng(3);
    const auto params = model_params::init(2, 5, cfg, rng);
    const std::vector<std::string> names{"pa.~pa", "ps.~ps"};
    testing::temp_dir dir("ckpt");
    save_checkpoint(dir.path() / "ck", params, names, cfg);
    const checkpoint back = load_checkpoint(dir.path() / "ck");
    CHECK(back.metapaths == names);
    CHECK(back.config.lambda == 0.25);
    CHECK(back.config.d == 4);
    CHECK(back.config.seed == 99);
    const auto a = params.named();
    const auto b = back.params.named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second.value() == b[i].second.value());
    }
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing"), data_error);
}

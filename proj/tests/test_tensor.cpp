#include "doctest.h"

#include "hemi/adam.hpp"
#include "hemi/autodiff.hpp"
#include "hemi/error.hpp"
#include "hemi/tensor.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

using namespace hemi;
using doctest::Approx;

TEST_CASE("tensor shape checks") {
    tensor t = tensor::matrix(2, 3, 1.5);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(tensor({2, 2}, std::vector<double>{1.0}), numeric_error);
    CHECK_THROWS_AS(tensor({4}, 0.0).rows(), numeric_error);
}

TEST_CASE("sparse multiply equals dense multiply") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + rng() % 50;
        const std::size_t m = 1 + rng() % 50;
        std::vector<sparse_matrix::entry> entries;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c)
                if (rng() % 5 == 0) entries.push_back({r, c, static_cast<double>(rng() % 7) - 3.0});
        const sparse_matrix s(n, m, entries);
        const tensor b = testing::random_matrix(m, 4, rng);
        const tensor dense = matmul_values(s.to_dense(), b);
        const tensor sparse = s.multiply(b);
        for (std::size_t i = 0; i < dense.size(); ++i) CHECK(sparse.values()[i] == Approx(dense.values()[i]));
        CHECK(s.transposed().to_dense() == transpose_values(s.to_dense()));
    }
}

TEST_CASE("sparse_matrix rejects duplicates and unsorted entries") {
    CHECK_THROWS_AS(sparse_matrix(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), numeric_error);
    CHECK_THROWS_AS(sparse_matrix(2, 2, {{1, 0, 1.0}, {0, 0, 2.0}}), numeric_error);
    CHECK_THROWS_AS(sparse_matrix(2, 2, {{2, 0, 1.0}}), numeric_error);
}

TEST_CASE("tensor binary round trip is exact and little-endian") {
    std::mt19937_64 rng(5);
    const tensor t = testing::random_matrix(3, 4, rng);
    std::stringstream buf;
    write_tensor(buf, t);
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 4) == "HEMI");
    CHECK(static_cast<unsigned char>(bytes[4]) == 2);  // rank, low byte first
    CHECK(bytes.size() == 4 + 4 + 2 * 8 + 12 * 8);
    const tensor back = read_tensor(buf);
    CHECK(back == t);

    std::stringstream bad("HEMX");
    CHECK_THROWS_AS(read_tensor(bad), data_error);
}

TEST_CASE("tensor TSV round trip is exact") {
    std::mt19937_64 rng(6);
    const tensor t = testing::random_matrix(5, 3, rng);
    std::stringstream buf;
    write_tsv(buf, t);
    CHECK(read_tsv(buf) == t);

    std::stringstream ragged("1\t2\n3\n");
    CHECK_THROWS_AS(read_tsv(ragged), data_error);
}

TEST_CASE("glorot_init bounds, determinism, and mean") {
    std::mt19937_64 a(42), b(42);
    const tensor x = glorot_init(2, 2, a);
    CHECK(x == glorot_init(2, 2, b));
    for (double v : x.values()) CHECK(std::abs(v) <= std::sqrt(6.0 / 4.0));

    std::mt19937_64 rng(7);
    const tensor big = glorot_init(100, 100, rng);
    const double mean = std::accumulate(big.values().begin(), big.values().end(), 0.0) / 10000.0;
    CHECK(std::abs(mean) < 0.02);
    for (double v : big.values()) CHECK(std::abs(v) <= std::sqrt(6.0 / 200.0));
}

TEST_CASE("forward op examples") {
    CHECK(sigmoid(var::constant(tensor::scalar(0.0))).item() == 0.5);

    const var same = softmax(var::constant(tensor::row({3.7, 3.7})));
    CHECK(same.value()[0] == Approx(0.5));
    CHECK(same.value()[1] == Approx(0.5));

    const var s = softmax(var::constant(tensor::row({std::log(2.0), 0.0})));
    CHECK(s.value()[0] == Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.value()[1] == Approx(1.0 / 3.0).epsilon(1e-12));

    std::mt19937_64 rng(9);
    const var big = softmax(var::constant(testing::random_matrix(4, 7, rng, -30.0, 30.0)));
    for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (double v : big.value().row_span(r)) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    const var ls = log_sigmoid(var::constant(tensor::row({-800.0, 800.0})));
    CHECK(ls.value()[0] == Approx(-800.0));
    CHECK(ls.value()[1] == Approx(0.0));
}

TEST_CASE("shape mismatch messages name both shapes") {
    const var a = var::constant(tensor::matrix(2, 3));
    const var b = var::constant(tensor::matrix(2, 3));
    try {
        matmul(a, b);
        FAIL("expected a shape error");
    } catch (const numeric_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, var::constant(tensor::matrix(3, 2))), numeric_error);
}

TEST_CASE("backward examples") {
    SUBCASE("dot(w, w)") {
        var w = var::parameter(tensor::row({1.0, 2.0}));
        backward(dot(w, w));
        CHECK(w.grad()[0] == 2.0);
        CHECK(w.grad()[1] == 4.0);
    }
    SUBCASE("sigmoid(w . x) at w = 0") {
        var w = var::parameter(tensor::row({0.0, 0.0, 0.0}));
        const var x = var::constant(tensor::row({1.0, -2.0, 3.0}));
        backward(sigmoid(dot(w, x)));
        CHECK(w.grad()[0] == Approx(0.25));
        CHECK(w.grad()[1] == Approx(-0.5));
        CHECK(w.grad()[2] == Approx(0.75));
    }
    SUBCASE("non-scalar loss is rejected") {
        var w = var::parameter(tensor::row({1.0, 2.0}));
        CHECK_THROWS_AS(backward(w), numeric_error);
    }
    SUBCASE("unreachable parameters keep a zero or empty gradient") {
        var w = var::parameter(tensor::row({1.0}));
        var unused = var::parameter(tensor::row({5.0}));
        backward(dot(w, w));
        CHECK((unused.grad().empty() || unused.grad()[0] == 0.0));
    }
}

TEST_CASE("every op matches central differences") {
    std::mt19937_64 rng(17);
    var a = var::parameter(testing::random_matrix(3, 4, rng));
    var b = var::parameter(testing::random_matrix(4, 2, rng));
    var c = var::parameter(testing::random_matrix(3, 4, rng));
    var bias = var::parameter(testing::random_matrix(1, 4, rng));
    var slope = var::parameter(tensor::scalar(0.3));
    var k = var::parameter(tensor::scalar(0.7));
    const sparse_matrix s(3, 3, {{0, 0, 0.5}, {0, 2, -1.0}, {1, 1, 2.0}, {2, 0, 0.25}});
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {2, 2}, {1, 0}};
    const var positive = var::parameter(testing::random_matrix(3, 4, rng, 0.5, 2.0));

    const std::vector<std::pair<const char*, std::function<var()>>> cases{
        {"matmul", [&] { return sum_all(mul(matmul(a, b), matmul(a, b))); }},
        {"transpose", [&] { return sum_all(mul(matmul(transpose(a), c), matmul(transpose(a), c))); }},
        {"spmm", [&] { return sum_all(mul(spmm(s, a), c)); }},
        {"add sub", [&] { return dot(add(a, c), sub(a, c)); }},
        {"bias_add", [&] { return dot(bias_add(a, bias), bias_add(c, bias)); }},
        {"prelu", [&] { return dot(prelu(a, slope), c); }},
        {"sigmoid", [&] { return dot(sigmoid(a), c); }},
        {"log_sigmoid", [&] { return sum_all(log_sigmoid(mul(a, c))); }},
        {"log", [&] { return sum_all(mul(log(positive), a)); }},
        {"neg scale", [&] { return dot(neg(scale(a, 1.7)), c); }},
        {"scale_by", [&] { return dot(scale_by(a, k), c); }},
        {"softmax", [&] { return dot(softmax(a), c); }},
        {"log_softmax", [&] { return dot(log_softmax(a), c); }},
        {"mean_rows", [&] { return dot(mean_rows(mul(a, c)), bias); }},
        {"mean_all", [&] { return mean_all(mul(mul(a, a), c)); }},
        {"rows_dot", [&] { return sum_all(mul(rows_dot(a, c), rows_dot(a, a))); }},
        {"concat_cols",
         [&] {
             const std::vector<var> parts{a, c};
             const var cat = concat_cols(parts);
             return dot(cat, cat);
         }},
        {"element", [&] { return mul(element(a, 1, 2), element(c, 2, 3)); }},
        {"pair_dot", [&] { return sum_all(mul(pair_dot(a, pairs), pair_dot(c, pairs))); }},
    };
    for (const auto& [name, fn] : cases) {
        const std::string op = name;
        CAPTURE(op);
        for (var p : {a, b, c, bias, slope, k}) CHECK(testing::gradient_error(fn, p) < 1e-4);
    }
}

TEST_CASE("adam_step examples") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        var w = var::parameter(tensor::row({1.0, -2.0}));
        w.grad() = tensor::row({0.0, 0.0});
        adam_state st;
        std::vector<var> ps{w};
        adam_step(st, ps);
        CHECK(w.value() == tensor::row({1.0, -2.0}));
        CHECK(st.t == 1);
    }
    SUBCASE("first step with g = 1 moves by lr / (1 + eps)") {
        var w = var::parameter(tensor::scalar(0.0));
        w.grad() = tensor::scalar(1.0);
        adam_state st;
        std::vector<var> ps{w};
        adam_step(st, ps);
        CHECK(w.item() == Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    }
    SUBCASE("two constant-gradient steps follow the closed form") {
        var w = var::parameter(tensor::scalar(0.0));
        adam_state st;
        std::vector<var> ps{w};
        double prev = w.item();
        for (int t = 1; t <= 2; ++t) {
            w.grad() = tensor::scalar(1.0);
            adam_step(st, ps);
            CHECK(w.item() < prev);
            prev = w.item();
        }
        // m_hat = v_hat = 1 at every step for a constant unit gradient.
        CHECK(w.item() == Approx(-2.0 * 0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    }
    SUBCASE("shape changes are rejected") {
        var w = var::parameter(tensor::row({1.0}));
        w.grad() = tensor::row({1.0});
        adam_state st;
        std::vector<var> ps{w};
        adam_step(st, ps);
        w.value() = tensor::row({1.0, 2.0});
        w.grad() = tensor::row({1.0, 2.0});
        CHECK_THROWS_AS(adam_step(st, ps), numeric_error);
    }
}

TEST_CASE("clip_grad_norm rescales to the cap") {
    var a = var::parameter(tensor::row({3.0}));
    var b = var::parameter(tensor::row({4.0}));
    a.grad() = tensor::row({3.0});
    b.grad() = tensor::row({4.0});
    std::vector<var> ps{a, b};
    CHECK(clip_grad_norm(ps, 1.0) == Approx(5.0));
    CHECK(a.grad()[0] == Approx(0.6));
    CHECK(b.grad()[0] == Approx(0.8));
    CHECK(clip_grad_norm(ps, 10.0) == Approx(1.0));
    CHECK(a.grad()[0] == Approx(0.6));
}

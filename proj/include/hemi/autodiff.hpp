#pragma once

#include "hemi/tensor.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace hemi {

namespace detail {

struct node {
    tensor value;
    tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<node>> parents;
    // Accumulates this node's grad into its parents' grads.
    std::function<void(node&)> backward;
};

}  // namespace detail

/// Handle to a value on the define-by-run tape.
///
/// Parameters are leaf vars created with `var::parameter`; every op on a var
/// that requires a gradient records a node holding its parents and a
/// backward closure. The tape is simply the parent graph reachable from the
/// loss, so dropping the loss frees it.
class var {
public:
    var() = default;

    static var constant(tensor value);
    static var parameter(tensor value);

    const tensor& value() const { return node_->value; }
    tensor& value() { return node_->value; }

    /// Zero-shaped until a backward pass reaches this var.
    const tensor& grad() const { return node_->grad; }
    tensor& grad() { return node_->grad; }
    void zero_grad();

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool valid() const { return node_ != nullptr; }

    const shape_t& shape() const { return node_->value.shape(); }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    double item() const { return node_->value.item(); }

    // Internal: used by op implementations.
    explicit var(std::shared_ptr<detail::node> n) : node_(std::move(n)) {}
    const std::shared_ptr<detail::node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<detail::node> node_;
};

/// Reverse-mode pass from a 1x1 loss. Every var reachable from `loss` gets
/// grad = d loss / d var (previous grads are overwritten, not accumulated).
void backward(const var& loss);

var matmul(const var& a, const var& b);
var transpose(const var& a);
/// Sparse operand is a constant.
var spmm(const sparse_matrix& s, const var& b);
var add(const var& a, const var& b);
var sub(const var& a, const var& b);
/// a (n x c) + bias (1 x c) broadcast over rows.
var bias_add(const var& a, const var& bias);
/// max(x,0) + slope * min(x,0); slope is 1x1.
var prelu(const var& a, const var& slope);
var sigmoid(const var& a);
/// log(sigmoid(x)) evaluated without overflow.
var log_sigmoid(const var& a);
var log(const var& a);
var neg(const var& a);
var mul(const var& a, const var& b);
var scale(const var& a, double factor);
/// a scaled by a 1x1 var.
var scale_by(const var& a, const var& factor);
/// Softmax over each row (a 1 x n vector is a single row).
var softmax(const var& a);
var log_softmax(const var& a);
/// n x c -> 1 x c
var mean_rows(const var& a);
var mean_all(const var& a);
var sum_all(const var& a);
/// Frobenius inner product of two same-shape tensors -> 1x1.
var dot(const var& a, const var& b);
/// Per-row inner products: n x c, n x c -> n x 1.
var rows_dot(const var& a, const var& b);
/// Concatenate along columns (same row count).
var concat_cols(std::span<const var> parts);
/// Entry (r, c) as 1x1.
var element(const var& a, std::size_t r, std::size_t c);
/// <a_row(p.first), a_row(p.second)> for each pair -> k x 1.
var pair_dot(const var& a, std::span<const std::pair<std::size_t, std::size_t>> pairs);

inline var operator+(const var& a, const var& b) { return add(a, b); }
inline var operator-(const var& a, const var& b) { return sub(a, b); }
inline var operator-(const var& a) { return neg(a); }
inline var operator*(const var& a, double f) { return scale(a, f); }
inline var operator*(double f, const var& a) { return scale(a, f); }

}  // namespace hemi

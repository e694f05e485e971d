#include "hemi/autodiff.hpp"

#include "hemi/error.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace hemi {

namespace {

using detail::node;
using node_ptr = std::shared_ptr<node>;

var make_result(tensor value, std::vector<node_ptr> parents, std::function<void(node&)> backward_fn) {
    auto n = std::make_shared<node>();
    n->value = std::move(value);
    n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const node_ptr& p) { return p->requires_grad; });
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(backward_fn);
    }
    return var(std::move(n));
}

// Grad buffers are allocated by backward() for every reachable node.
void accumulate(node& target, const tensor& delta) {
    if (!target.requires_grad) return;
    auto dst = target.grad.values();
    auto src = delta.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename F>
void accumulate_each(node& target, F&& f) {
    if (!target.requires_grad) return;
    auto dst = target.grad.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += f(i);
}

void require_same_shape(const char* op, const tensor& a, const tensor& b) {
    if (a.shape() != b.shape()) {
        throw numeric_error(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    }
}

void require_matrix(const char* op, const tensor& a) {
    if (a.rank() != 2) throw numeric_error(std::string(op) + " expects a matrix, got " + shape_string(a.shape()));
}

void require_valid(const var& a) {
    if (!a.valid()) throw numeric_error("operation on an empty var");
}

// a^T * b
tensor matmul_tn(const tensor& a, const tensor& b) {
    const std::size_t n = a.rows();
    const std::size_t k = a.cols();
    const std::size_t m = b.cols();
    tensor out = tensor::matrix(k, m);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = bv + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            double* dst = ov + p * m;
            for (std::size_t j = 0; j < m; ++j) dst[j] += x * src[j];
        }
    }
    return out;
}

// a * b^T
tensor matmul_nt(const tensor& a, const tensor& b) { return matmul_values(a, transpose_values(b)); }

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

var var::constant(tensor value) {
    auto n = std::make_shared<node>();
    n->value = std::move(value);
    return var(std::move(n));
}

var var::parameter(tensor value) {
    auto n = std::make_shared<node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return var(std::move(n));
}

void var::zero_grad() {
    node_->grad = tensor(node_->value.shape(), 0.0);
}

void backward(const var& loss) {
    require_valid(loss);
    if (loss.value().size() != 1) {
        throw numeric_error("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<node*> order;
    std::unordered_set<node*> visited;
    std::vector<std::pair<node*, std::size_t>> stack;
    stack.emplace_back(loss.node_ptr().get(), 0);
    visited.insert(loss.node_ptr().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            node* p = n->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (node* n : order) n->grad = tensor(n->value.shape(), 0.0);
    order.back()->grad.fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

var matmul(const var& a, const var& b) {
    require_valid(a);
    require_valid(b);
    tensor out = matmul_values(a.value(), b.value());
    node_ptr pa = a.node_ptr();
    node_ptr pb = b.node_ptr();
    return make_result(std::move(out), {pa, pb}, [pa, pb](node& self) {
        if (pa->requires_grad) accumulate(*pa, matmul_nt(self.grad, pb->value));
        if (pb->requires_grad) accumulate(*pb, matmul_tn(pa->value, self.grad));
    });
}

var transpose(const var& a) {
    require_valid(a);
    const tensor& v = a.value();
    const std::size_t r = v.rows();
    const std::size_t c = v.cols();
    tensor out = tensor::matrix(c, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(j, i) = v(i, j);
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa, r, c](node& self) {
        accumulate_each(*pa, [&](std::size_t idx) { return self.grad(idx % c, idx / c); });
    });
}

var spmm(const sparse_matrix& s, const var& b) {
    require_valid(b);
    tensor out = s.multiply(b.value());
    auto shared = std::make_shared<const sparse_matrix>(s);
    node_ptr pb = b.node_ptr();
    return make_result(std::move(out), {pb}, [shared, pb](node& self) {
        if (!pb->requires_grad) return;
        // S^T * G without materializing the transpose.
        const auto rp = shared->row_ptr();
        const auto ci = shared->col_idx();
        const auto vs = shared->vals();
        const std::size_t c = self.grad.cols();
        tensor& g = pb->grad;
        for (std::size_t r = 0; r < shared->rows(); ++r) {
            const double* src = &self.grad(r, 0);
            for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
                double* dst = &g(ci[k], 0);
                const double w = vs[k];
                for (std::size_t j = 0; j < c; ++j) dst[j] += w * src[j];
            }
        }
    });
}

var add(const var& a, const var& b) {
    require_valid(a);
    require_valid(b);
    require_same_shape("add", a.value(), b.value());
    tensor out = a.value();
    auto ov = out.values();
    auto bv = b.value().values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
    node_ptr pa = a.node_ptr();
    node_ptr pb = b.node_ptr();
    return make_result(std::move(out), {pa, pb}, [pa, pb](node& self) {
        accumulate(*pa, self.grad);
        accumulate(*pb, self.grad);
    });
}

var sub(const var& a, const var& b) {
    require_valid(a);
    require_valid(b);
    require_same_shape("sub", a.value(), b.value());
    tensor out = a.value();
    auto ov = out.values();
    auto bv = b.value().values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] -= bv[i];
    node_ptr pa = a.node_ptr();
    node_ptr pb = b.node_ptr();
    return make_result(std::move(out), {pa, pb}, [pa, pb](node& self) {
        accumulate(*pa, self.grad);
        accumulate_each(*pb, [&](std::size_t i) { return -self.grad[i]; });
    });
}

var bias_add(const var& a, const var& bias) {
    require_valid(a);
    require_valid(bias);
    require_matrix("bias_add", a.value());
    const std::size_t r = a.rows();
    const std::size_t c = a.cols();
    if (bias.value().rank() != 2 || bias.rows() != 1 || bias.cols() != c) {
        throw numeric_error("bias_add shape mismatch: " + shape_string(a.shape()) + " + " +
                            shape_string(bias.shape()));
    }
    tensor out = a.value();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) += bias.value()[j];
    node_ptr pa = a.node_ptr();
    node_ptr pb = bias.node_ptr();
    return make_result(std::move(out), {pa, pb}, [pa, pb, r, c](node& self) {
        accumulate(*pa, self.grad);
        if (pb->requires_grad) {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) pb->grad[j] += self.grad(i, j);
        }
    });
}

var prelu(const var& a, const var& slope) {
    require_valid(a);
    require_valid(slope);
    if (slope.value().size() != 1) {
        throw numeric_error("prelu slope must be 1x1, got " + shape_string(slope.shape()));
    }
    const double s = slope.value()[0];
    tensor out = a.value();
    for (double& v : out.values())
        if (v <= 0.0) v *= s;
    node_ptr pa = a.node_ptr();
    node_ptr ps = slope.node_ptr();
    return make_result(std::move(out), {pa, ps}, [pa, ps, s](node& self) {
        const tensor& x = pa->value;
        accumulate_each(*pa, [&](std::size_t i) { return x[i] > 0.0 ? self.grad[i] : s * self.grad[i]; });
        if (ps->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i] <= 0.0) acc += self.grad[i] * x[i];
            ps->grad[0] += acc;
        }
    });
}

var sigmoid(const var& a) {
    require_valid(a);
    tensor out = a.value();
    for (double& v : out.values()) v = stable_sigmoid(v);
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa](node& self) {
        accumulate_each(*pa, [&](std::size_t i) {
            const double y = self.value[i];
            return self.grad[i] * y * (1.0 - y);
        });
    });
}

var log_sigmoid(const var& a) {
    require_valid(a);
    tensor out = a.value();
    for (double& v : out.values()) v = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa](node& self) {
        accumulate_each(*pa, [&](std::size_t i) { return self.grad[i] * stable_sigmoid(-pa->value[i]); });
    });
}

var log(const var& a) {
    require_valid(a);
    tensor out = a.value();
    for (double& v : out.values()) v = std::log(v);
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa](node& self) {
        accumulate_each(*pa, [&](std::size_t i) { return self.grad[i] / pa->value[i]; });
    });
}

var neg(const var& a) { return scale(a, -1.0); }

var mul(const var& a, const var& b) {
    require_valid(a);
    require_valid(b);
    require_same_shape("mul", a.value(), b.value());
    tensor out = a.value();
    auto ov = out.values();
    auto bv = b.value().values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
    node_ptr pa = a.node_ptr();
    node_ptr pb = b.node_ptr();
    return make_result(std::move(out), {pa, pb}, [pa, pb](node& self) {
        accumulate_each(*pa, [&](std::size_t i) { return self.grad[i] * pb->value[i]; });
        accumulate_each(*pb, [&](std::size_t i) { return self.grad[i] * pa->value[i]; });
    });
}

var scale(const var& a, double factor) {
    require_valid(a);
    tensor out = a.value();
    for (double& v : out.values()) v *= factor;
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa, factor](node& self) {
        accumulate_each(*pa, [&](std::size_t i) { return self.grad[i] * factor; });
    });
}

var scale_by(const var& a, const var& factor) {
    require_valid(a);
    require_valid(factor);
    if (factor.value().size() != 1) {
        throw numeric_error("scale_by factor must be 1x1, got " + shape_string(factor.shape()));
    }
    const double f = factor.value()[0];
    tensor out = a.value();
    for (double& v : out.values()) v *= f;
    node_ptr pa = a.node_ptr();
    node_ptr pf = factor.node_ptr();
    return make_result(std::move(out), {pa, pf}, [pa, pf, f](node& self) {
        accumulate_each(*pa, [&](std::size_t i) { return self.grad[i] * f; });
        if (pf->requires_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa->value[i];
            pf->grad[0] += acc;
        }
    });
}

var softmax(const var& a) {
    require_valid(a);
    require_matrix("softmax", a.value());
    const std::size_t r = a.rows();
    const std::size_t c = a.cols();
    tensor out = a.value();
    for (std::size_t i = 0; i < r; ++i) {
        double mx = out(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, out(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out(i, j) = std::exp(out(i, j) - mx);
            total += out(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out(i, j) /= total;
    }
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa, r, c](node& self) {
        if (!pa->requires_grad) return;
        for (std::size_t i = 0; i < r; ++i) {
            double inner = 0.0;
            for (std::size_t j = 0; j < c; ++j) inner += self.grad(i, j) * self.value(i, j);
            for (std::size_t j = 0; j < c; ++j) pa->grad(i, j) += self.value(i, j) * (self.grad(i, j) - inner);
        }
    });
}

var log_softmax(const var& a) {
    require_valid(a);
    require_matrix("log_softmax", a.value());
    const std::size_t r = a.rows();
    const std::size_t c = a.cols();
    tensor out = a.value();
    for (std::size_t i = 0; i < r; ++i) {
        double mx = out(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, out(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += std::exp(out(i, j) - mx);
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < c; ++j) out(i, j) -= lse;
    }
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa, r, c](node& self) {
        if (!pa->requires_grad) return;
        for (std::size_t i = 0; i < r; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < c; ++j) gsum += self.grad(i, j);
            for (std::size_t j = 0; j < c; ++j)
                pa->grad(i, j) += self.grad(i, j) - std::exp(self.value(i, j)) * gsum;
        }
    });
}

var mean_rows(const var& a) {
    require_valid(a);
    require_matrix("mean_rows", a.value());
    const std::size_t r = a.rows();
    const std::size_t c = a.cols();
    if (r == 0) throw numeric_error("mean_rows of an empty matrix");
    tensor out = tensor::matrix(1, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += a.value()(i, j);
    for (double& v : out.values()) v /= static_cast<double>(r);
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa, r, c](node& self) {
        const double inv = 1.0 / static_cast<double>(r);
        accumulate_each(*pa, [&](std::size_t i) { return self.grad[i % c] * inv; });
    });
}

var sum_all(const var& a) {
    require_valid(a);
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    node_ptr pa = a.node_ptr();
    return make_result(tensor::scalar(total), {pa}, [pa](node& self) {
        const double g = self.grad[0];
        accumulate_each(*pa, [&](std::size_t) { return g; });
    });
}

var mean_all(const var& a) {
    require_valid(a);
    if (a.value().empty()) throw numeric_error("mean_all of an empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

var dot(const var& a, const var& b) {
    require_valid(a);
    require_valid(b);
    require_same_shape("dot", a.value(), b.value());
    double total = 0.0;
    auto av = a.value().values();
    auto bv = b.value().values();
    for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * bv[i];
    node_ptr pa = a.node_ptr();
    node_ptr pb = b.node_ptr();
    return make_result(tensor::scalar(total), {pa, pb}, [pa, pb](node& self) {
        const double g = self.grad[0];
        accumulate_each(*pa, [&](std::size_t i) { return g * pb->value[i]; });
        accumulate_each(*pb, [&](std::size_t i) { return g * pa->value[i]; });
    });
}

var rows_dot(const var& a, const var& b) {
    require_valid(a);
    require_valid(b);
    require_same_shape("rows_dot", a.value(), b.value());
    const std::size_t r = a.rows();
    const std::size_t c = a.cols();
    tensor out = tensor::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += a.value()(i, j) * b.value()(i, j);
        out[i] = s;
    }
    node_ptr pa = a.node_ptr();
    node_ptr pb = b.node_ptr();
    return make_result(std::move(out), {pa, pb}, [pa, pb, c](node& self) {
        accumulate_each(*pa, [&](std::size_t i) { return self.grad[i / c] * pb->value[i]; });
        accumulate_each(*pb, [&](std::size_t i) { return self.grad[i / c] * pa->value[i]; });
    });
}

var concat_cols(std::span<const var> parts) {
    if (parts.empty()) throw numeric_error("concat_cols of nothing");
    const std::size_t r = parts[0].rows();
    std::size_t total = 0;
    std::vector<node_ptr> parents;
    std::vector<std::size_t> widths;
    for (const var& p : parts) {
        require_valid(p);
        if (p.rows() != r) {
            throw numeric_error("concat_cols row mismatch: " + shape_string(parts[0].shape()) + " vs " +
                                shape_string(p.shape()));
        }
        widths.push_back(p.cols());
        total += p.cols();
        parents.push_back(p.node_ptr());
    }
    tensor out = tensor::matrix(r, total);
    std::size_t offset = 0;
    for (const var& p : parts) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) out(i, offset + j) = p.value()(i, j);
        offset += p.cols();
    }
    auto captured = parents;
    return make_result(std::move(out), std::move(parents), [captured, widths, r](node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < captured.size(); ++k) {
            const std::size_t w = widths[k];
            if (captured[k]->requires_grad) {
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < w; ++j) captured[k]->grad(i, j) += self.grad(i, off + j);
            }
            off += w;
        }
    });
}

var element(const var& a, std::size_t r, std::size_t c) {
    require_valid(a);
    if (r >= a.rows() || c >= a.cols()) {
        throw numeric_error("element (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " +
                            shape_string(a.shape()));
    }
    node_ptr pa = a.node_ptr();
    return make_result(tensor::scalar(a.value()(r, c)), {pa}, [pa, r, c](node& self) {
        if (pa->requires_grad) pa->grad(r, c) += self.grad[0];
    });
}

var pair_dot(const var& a, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    require_valid(a);
    const std::size_t n = a.rows();
    const std::size_t c = a.cols();
    std::vector<std::pair<std::size_t, std::size_t>> idx(pairs.begin(), pairs.end());
    tensor out = tensor::matrix(idx.size(), 1);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto [p, q] = idx[k];
        if (p >= n || q >= n) throw numeric_error("pair_dot index out of range");
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += a.value()(p, j) * a.value()(q, j);
        out[k] = s;
    }
    node_ptr pa = a.node_ptr();
    return make_result(std::move(out), {pa}, [pa, idx = std::move(idx), c](node& self) {
        if (!pa->requires_grad) return;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto [p, q] = idx[k];
            const double g = self.grad[k];
            for (std::size_t j = 0; j < c; ++j) {
                const double vp = pa->value(p, j);
                const double vq = pa->value(q, j);
                pa->grad(p, j) += g * vq;
                pa->grad(q, j) += g * vp;
            }
        }
    });
}

}  // namespace hemi

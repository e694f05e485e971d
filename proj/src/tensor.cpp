#include "hemi/tensor.hpp"

#include "hemi/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace hemi {

std::string shape_string(const shape_t& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

std::size_t extent_product(const shape_t& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

tensor::tensor(shape_t shape, double fill) : shape_(std::move(shape)), values_(extent_product(shape_), fill) {}

tensor::tensor(shape_t shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != extent_product(shape_)) {
        throw numeric_error("tensor of shape " + shape_string(shape_) + " given " + std::to_string(values_.size()) +
                            " values");
    }
}

tensor tensor::matrix(std::size_t rows, std::size_t cols, double fill) { return tensor({rows, cols}, fill); }

tensor tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return tensor({rows, cols}, std::move(values));
}

tensor tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return tensor({1, n}, std::move(values));
}

tensor tensor::identity(std::size_t n) {
    tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::size_t tensor::rows() const {
    if (shape_.size() != 2) throw numeric_error("expected a matrix, got shape " + shape_string(shape_));
    return shape_[0];
}

std::size_t tensor::cols() const {
    if (shape_.size() != 2) throw numeric_error("expected a matrix, got shape " + shape_string(shape_));
    return shape_[1];
}

std::span<const double> tensor::row_span(std::size_t r) const {
    const std::size_t c = cols();
    return std::span<const double>(values_).subspan(r * c, c);
}

double tensor::item() const {
    if (values_.size() != 1) throw numeric_error("item() on tensor of shape " + shape_string(shape_));
    return values_[0];
}

bool tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

sparse_matrix::sparse_matrix(std::size_t rows, std::size_t cols, const std::vector<entry>& entries)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {
    col_idx_.reserve(entries.size());
    vals_.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const entry& e = entries[k];
        if (e.row >= rows || e.col >= cols) {
            throw numeric_error("sparse entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                                ") out of range for " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        if (k > 0) {
            const entry& p = entries[k - 1];
            if (e.row < p.row || (e.row == p.row && e.col <= p.col)) {
                throw numeric_error("sparse entries must be row-major sorted without duplicates");
            }
        }
        ++row_ptr_[e.row + 1];
        col_idx_.push_back(e.col);
        vals_.push_back(e.value);
    }
    for (std::size_t r = 0; r < rows; ++r) row_ptr_[r + 1] += row_ptr_[r];
}

sparse_matrix sparse_matrix::identity(std::size_t n) {
    std::vector<entry> entries;
    entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
    return sparse_matrix(n, n, entries);
}

std::vector<sparse_matrix::entry> sparse_matrix::entries() const {
    std::vector<entry> out;
    out.reserve(nonzeros());
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) out.push_back({r, col_idx_[k], vals_[k]});
    }
    return out;
}

tensor sparse_matrix::to_dense() const {
    tensor out = tensor::matrix(rows_, cols_);
    for (const auto& e : entries()) out(e.row, e.col) = e.value;
    return out;
}

sparse_matrix sparse_matrix::transposed() const {
    auto es = entries();
    for (auto& e : es) std::swap(e.row, e.col);
    std::sort(es.begin(), es.end(), [](const entry& a, const entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    return sparse_matrix(cols_, rows_, es);
}

tensor sparse_matrix::multiply(const tensor& dense) const {
    if (dense.rows() != cols_) {
        throw numeric_error("spmm shape mismatch: sparse [" + std::to_string(rows_) + ", " + std::to_string(cols_) +
                            "] times " + shape_string(dense.shape()));
    }
    const std::size_t c = dense.cols();
    tensor out = tensor::matrix(rows_, c);
    for (std::size_t r = 0; r < rows_; ++r) {
        double* dst = &out(r, 0);
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            const double w = vals_[k];
            const double* src = dense.row_span(col_idx_[k]).data();
            for (std::size_t j = 0; j < c; ++j) dst[j] += w * src[j];
        }
    }
    return out;
}

tensor matmul_values(const tensor& a, const tensor& b) {
    if (a.cols() != b.rows()) {
        throw numeric_error("matmul shape mismatch: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t n = a.rows();
    const std::size_t k = a.cols();
    const std::size_t m = b.cols();
    tensor out = tensor::matrix(n, m);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* dst = ov + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            const double* src = bv + p * m;
            for (std::size_t j = 0; j < m; ++j) dst[j] += x * src[j];
        }
    }
    return out;
}

tensor transpose_values(const tensor& a) {
    const std::size_t r = a.rows();
    const std::size_t c = a.cols();
    tensor out = tensor::matrix(c, r);
    const double* av = a.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = av[i * c + j];
    return out;
}

tensor glorot_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    tensor t = tensor::matrix(rows, cols);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

namespace {

constexpr std::array<char, 4> magic{'H', 'E', 'M', 'I'};

template <typename T>
void write_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), bytes.size())) throw data_error("truncated tensor stream");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

void write_tensor(std::ostream& out, const tensor& t) {
    out.write(magic.data(), magic.size());
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) write_le<std::uint64_t>(out, e);
    for (double v : t.values()) write_le<double>(out, v);
}

tensor read_tensor(std::istream& in) {
    std::array<char, 4> head{};
    if (!in.read(head.data(), head.size()) || head != magic) throw data_error("bad tensor header");
    const auto rank = read_le<std::uint32_t>(in);
    shape_t shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(read_le<std::uint64_t>(in));
    std::vector<double> values(extent_product(shape));
    for (double& v : values) v = read_le<double>(in);
    return tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    write_tensor(out, t);
}

tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot read " + path.string());
    return read_tensor(in);
}

void write_tsv(std::ostream& out, const tensor& t) {
    const std::size_t r = t.rows();
    const std::size_t c = t.cols();
    std::array<char, 32> buf{};
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            if (j) out << '\t';
            auto res = std::to_chars(buf.data(), buf.data() + buf.size(), t(i, j));
            out.write(buf.data(), res.ptr - buf.data());
        }
        out << '\n';
    }
}

tensor read_tsv(std::istream& in) {
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t count = 0;
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t tab = line.find('\t', start);
            if (tab == std::string::npos) tab = line.size();
            double v = 0.0;
            auto res = std::from_chars(line.data() + start, line.data() + tab, v);
            if (res.ec != std::errc() || res.ptr != line.data() + tab) {
                throw data_error("bad number in TSV row " + std::to_string(rows + 1));
            }
            values.push_back(v);
            ++count;
            start = tab + 1;
        }
        if (rows == 0) {
            cols = count;
        } else if (count != cols) {
            throw data_error("ragged TSV row " + std::to_string(rows + 1));
        }
        ++rows;
    }
    return tensor::matrix(rows, cols, std::move(values));
}

}  // namespace hemi

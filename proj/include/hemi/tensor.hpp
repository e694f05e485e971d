#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hemi {

using shape_t = std::vector<std::size_t>;

std::string shape_string(const shape_t& shape);

/// Dense row-major array of doubles. Numeric ops treat rank-2 tensors as
/// matrices and represent vectors as 1 x n rows.
class tensor {
public:
    tensor() = default;
    explicit tensor(shape_t shape, double fill = 0.0);
    tensor(shape_t shape, std::vector<double> values);

    static tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static tensor row(std::vector<double> values);
    static tensor scalar(double v) { return matrix(1, 1, v); }
    static tensor identity(std::size_t n);

    const shape_t& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    // Rank-2 extents; throw numeric_error on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::span<const double> row_span(std::size_t r) const;

    double item() const;
    bool all_finite() const;
    void fill(double v);

    friend bool operator==(const tensor&, const tensor&) = default;

private:
    shape_t shape_;
    std::vector<double> values_;
};

/// Compressed sparse rows. Built from triplets sorted row-major with no
/// duplicate coordinates.
class sparse_matrix {
public:
    struct entry {
        std::size_t row = 0;
        std::size_t col = 0;
        double value = 0.0;
    };

    sparse_matrix() = default;
    sparse_matrix(std::size_t rows, std::size_t cols, const std::vector<entry>& entries);

    static sparse_matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nonzeros() const { return col_idx_.size(); }

    std::span<const std::size_t> row_ptr() const { return row_ptr_; }
    std::span<const std::size_t> col_idx() const { return col_idx_; }
    std::span<const double> vals() const { return vals_; }

    std::vector<entry> entries() const;
    tensor to_dense() const;
    sparse_matrix transposed() const;

    /// this * dense
    tensor multiply(const tensor& dense) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> vals_;
};

/// Dense matrix product a * b.
tensor matmul_values(const tensor& a, const tensor& b);
tensor transpose_values(const tensor& a);

/// Uniform in +-sqrt(6 / (rows + cols)).
tensor glorot_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

// Binary format, little-endian: "HEMI", u32 rank, u64 extents, f64 payload.
void write_tensor(std::ostream& out, const tensor& t);
tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const tensor& t);
tensor load_tensor(const std::filesystem::path& path);

/// One row per line, tab-separated, round-trip precision.
void write_tsv(std::ostream& out, const tensor& t);
tensor read_tsv(std::istream& in);

}  // namespace hemi

#pragma once

#include <cstddef>
#include <vector>

#include "hybridlm/rng.hpp"

namespace hybridlm {

/// Dense row-major matrix of doubles. Values are treated as immutable once a
/// kernel has produced them; kernels never mutate their inputs.
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Matrix identity(std::size_t n);

    /// Entries uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], fan_in = rows.
    static Matrix random_init(std::size_t rows, std::size_t cols, Rng& rng);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> data_;
};

/// Standard matrix product. Accumulation is over ascending k for every output
/// entry, so repeated calls with the same inputs are bit-identical.
/// Throws ShapeError on a.cols != b.rows, naming both operand shapes.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax where masked entries (mask == 0) are excluded by setting
/// their logits to -inf before normalization; they come out exactly 0.
/// Throws DegenerateRowError if a row has no unmasked entry.
Matrix masked_softmax(const Matrix& logits, const Matrix& mask);

/// RMS normalization per row with a learned gain vector (length = cols).
Matrix rms_norm(const Matrix& x, const std::vector<double>& gain, double eps = 1e-6);

double dot(const double* a, const double* b, std::size_t n);

/// Throws Error if any entry is non-finite; `what` names the producing kernel.
void check_finite(const Matrix& m, const char* what);

}  // namespace hybridlm

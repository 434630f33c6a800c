#include "hybridlm/matrix.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hybridlm/errors.hpp"

namespace hybridlm {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::random_init(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-bound, bound);
    }
    return m;
}

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, lhs " + shape_str(a) +
                         " vs rhs " + shape_str(b));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.cols(), p = b.cols();
    // i-k-j ordering: every c(i,j) still accumulates k = 0..n-1 ascending,
    // identical to the naive triple loop, but with unit-stride inner access.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < p; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    check_finite(c, "matmul");
    return c;
}

Matrix masked_softmax(const Matrix& logits, const Matrix& mask) {
    if (logits.rows() != mask.rows() || logits.cols() != mask.cols()) {
        throw ShapeError("masked_softmax: logits " + shape_str(logits) +
                         " vs mask " + shape_str(mask));
    }
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double maxv = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            if (mask(i, j) != 0.0) {
                any = true;
                maxv = std::max(maxv, logits(i, j));
            }
        }
        if (!any) {
            throw DegenerateRowError(
                i, "masked_softmax: row " + std::to_string(i) + " is fully masked");
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            if (mask(i, j) != 0.0) {
                const double e = std::exp(logits(i, j) - maxv);
                out(i, j) = e;
                sum += e;
            }
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            if (mask(i, j) != 0.0) out(i, j) /= sum;
        }
    }
    check_finite(out, "masked_softmax");
    return out;
}

Matrix rms_norm(const Matrix& x, const std::vector<double>& gain, double eps) {
    if (gain.size() != x.cols()) {
        throw ShapeError("rms_norm: gain length " + std::to_string(gain.size()) +
                         " vs cols " + std::to_string(x.cols()));
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xr = x.row(i);
        double ms = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) ms += xr[j] * xr[j];
        const double inv = 1.0 / std::sqrt(ms / static_cast<double>(x.cols()) + eps);
        double* yr = out.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) yr[j] = xr[j] * inv * gain[j];
    }
    return out;
}

void check_finite(const Matrix& m, const char* what) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) {
            throw Error(std::string(what) + ": non-finite entry at flat index " +
                        std::to_string(i));
        }
    }
}

}  // namespace hybridlm

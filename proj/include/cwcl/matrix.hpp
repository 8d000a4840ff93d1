#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cwcl/errors.hpp"

namespace cwcl {

/// Dense row-major matrix of 64-bit floats. All core arithmetic in the
/// library runs on this type; embedding batches are stored one row per
/// sample.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major, size rows*cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }

    bool empty() const { return rows == 0 || cols == 0; }

    std::size_t size() const { return data.size(); }
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline bool all_finite(const Matrix& m) {
    return std::all_of(m.data.begin(), m.data.end(),
                       [](double v) { return std::isfinite(v); });
}

// ---------- elementwise ----------

inline Matrix& add_inplace(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw ValidationError("add: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
    return a;
}

inline Matrix& scale_inplace(Matrix& a, double s) {
    for (double& v : a.data) v *= s;
    return a;
}

inline Matrix add(Matrix a, const Matrix& b) {
    add_inplace(a, b);
    return a;
}

inline Matrix scale(Matrix a, double s) {
    scale_inplace(a, s);
    return a;
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// ---------- products ----------

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ValidationError("matmul: dimension mismatch " + shape_str(a) + " x " + shape_str(b));
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

/// a * b^T without materializing the transpose. For unit-norm embedding
/// batches this is the full pairwise cosine-similarity matrix.
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ValidationError("matmul_bt: dimension mismatch " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j)
            c.at(i, j) = dot(a.row(i), b.row(j), a.cols);
    return c;
}

/// a^T * b.
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows)
        throw ValidationError("matmul_at: dimension mismatch " + shape_str(a) + " vs " + shape_str(b));
    Matrix c(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

// ---------- norms ----------

inline double row_norm(const Matrix& m, std::size_t i) {
    return std::sqrt(dot(m.row(i), m.row(i), m.cols));
}

inline Matrix l2_normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double n = row_norm(m, i);
        if (n == 0.0)
            throw ValidationError("l2_normalize_rows: zero row at index " + std::to_string(i));
        double* r = out.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) r[j] /= n;
    }
    return out;
}

/// True when every row has Euclidean norm within tol of 1.
inline bool rows_unit_norm(const Matrix& m, double tol) {
    for (std::size_t i = 0; i < m.rows; ++i)
        if (std::abs(row_norm(m, i) - 1.0) > tol) return false;
    return true;
}

// ---------- stable reductions ----------

inline void log_softmax_inplace(double* x, std::size_t n) {
    if (n == 0) return;
    double xmax = x[0];
    for (std::size_t i = 1; i < n; ++i) xmax = std::max(xmax, x[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(x[i] - xmax);
    const double lse = xmax + std::log(sum);
    for (std::size_t i = 0; i < n; ++i) x[i] -= lse;
}

inline std::vector<double> log_softmax_row(std::vector<double> logits) {
    for (double v : logits)
        if (!std::isfinite(v)) throw ValidationError("log_softmax_row: non-finite input");
    log_softmax_inplace(logits.data(), logits.size());
    return logits;
}

/// Row-wise log-softmax over a logits matrix.
inline Matrix log_softmax_rows(Matrix m) {
    for (std::size_t i = 0; i < m.rows; ++i) log_softmax_inplace(m.row(i), m.cols);
    return m;
}

} // namespace cwcl

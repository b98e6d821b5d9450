#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pvvolt/errors.hpp"

namespace pvvolt {

// Compensated (Kahan) accumulator. Several fitted quantities are checked
// against 1e-8-level stationarity residuals over ~1e5 terms, which plain
// summation cannot guarantee.
struct KahanAccumulator {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }

    double value() const { return sum; }
};

inline double kahan_sum(std::span<const double> values) {
    KahanAccumulator acc;
    for (double v : values) acc.add(v);
    return acc.value();
}

inline double vec_dot(std::span<const double> a, std::span<const double> b) {
    KahanAccumulator acc;
    for (std::size_t i = 0; i < a.size(); ++i) acc.add(a[i] * b[i]);
    return acc.value();
}

inline double vec_norm(std::span<const double> a) {
    KahanAccumulator acc;
    for (double v : a) acc.add(v * v);
    return std::sqrt(acc.value());
}

inline double vec_l1(std::span<const double> a) {
    KahanAccumulator acc;
    for (double v : a) acc.add(std::fabs(v));
    return acc.value();
}

inline std::size_t vec_l0(std::span<const double> a) {
    std::size_t count = 0;
    for (double v : a) {
        if (v != 0.0) ++count;
    }
    return count;
}

// Dense row-major matrix of doubles. Deliberately minimal: just the
// storage plus the handful of kernels the factorization code needs.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return {};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) {
                throw ShapeError("matrix.from_rows: ragged row " + std::to_string(i));
            }
            for (std::size_t j = 0; j < m.cols_; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    std::span<const double> data() const { return data_; }

    bool operator==(const Matrix&) const = default;

    // H * y
    std::vector<double> matvec(std::span<const double> y) const {
        if (y.size() != cols_) {
            throw ShapeError("matrix.matvec: vector length " + std::to_string(y.size()) +
                             " does not match column count " + std::to_string(cols_));
        }
        std::vector<double> out(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* r = data_.data() + i * cols_;
            double acc = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) acc += r[j] * y[j];
            out[i] = acc;
        }
        return out;
    }

    // H^T * x
    std::vector<double> tmatvec(std::span<const double> x) const {
        if (x.size() != rows_) {
            throw ShapeError("matrix.tmatvec: vector length " + std::to_string(x.size()) +
                             " does not match row count " + std::to_string(rows_));
        }
        std::vector<double> out(cols_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* r = data_.data() + i * cols_;
            const double xi = x[i];
            if (xi == 0.0) continue;
            for (std::size_t j = 0; j < cols_; ++j) out[j] += xi * r[j];
        }
        return out;
    }

    double frobenius_sq() const {
        KahanAccumulator acc;
        for (double v : data_) acc.add(v * v);
        return acc.value();
    }

    std::vector<double> column_sums() const {
        std::vector<double> out(cols_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* r = data_.data() + i * cols_;
            for (std::size_t j = 0; j < cols_; ++j) out[j] += r[j];
        }
        return out;
    }

    // H -= sigma * x * y^T  (rank-one deflation step)
    void subtract_outer(double sigma, std::span<const double> x,
                        std::span<const double> y) {
        if (x.size() != rows_ || y.size() != cols_) {
            throw ShapeError("matrix.subtract_outer: factor lengths do not match shape");
        }
        for (std::size_t i = 0; i < rows_; ++i) {
            double* r = data_.data() + i * cols_;
            const double sx = sigma * x[i];
            if (sx == 0.0) continue;
            for (std::size_t j = 0; j < cols_; ++j) r[j] -= sx * y[j];
        }
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace pvvolt

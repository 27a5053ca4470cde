#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcoe/error.hpp"

namespace dcoe {

// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Row-major dense matrix of finite doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (rows == 0 || cols == 0) fail(Errc::Domain, "DenseMatrix: dimensions must be positive");
    }

    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
        : rows_(rows), cols_(cols), data_(std::move(entries)) {
        if (rows == 0 || cols == 0) fail(Errc::Domain, "DenseMatrix: dimensions must be positive");
        if (data_.size() != rows * cols) {
            fail(Errc::SizeMismatch, "DenseMatrix: expected " + std::to_string(rows * cols) +
                                         " entries, got " + std::to_string(data_.size()));
        }
        if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); })) {
            fail(Errc::Domain, "DenseMatrix: entries must be finite");
        }
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }

    std::span<const double> entries() const noexcept { return data_; }

    double max_abs_diff(const DenseMatrix& other) const {
        if (rows_ != other.rows_ || cols_ != other.cols_) {
            fail(Errc::SizeMismatch, "DenseMatrix: shape mismatch");
        }
        double worst = 0.0;
        for (std::size_t k = 0; k < data_.size(); ++k) {
            worst = std::max(worst, std::abs(data_[k] - other.data_[k]));
        }
        return worst;
    }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kPivotTolerance = 1e-12;

/// Lower-triangular factor L with L * L^T equal to the source matrix.
class CholeskyFactor {
public:
    std::size_t dim() const noexcept { return lower_.rows(); }
    const DenseMatrix& lower() const noexcept { return lower_; }

    DenseMatrix reconstruct() const {
        const std::size_t n = dim();
        DenseMatrix out(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k <= j; ++k) acc += lower_(i, k) * lower_(j, k);
                out(i, j) = acc;
                out(j, i) = acc;
            }
        }
        return out;
    }

    // out = L * g
    void apply(std::span<const double> g, std::span<double> out) const {
        const std::size_t n = dim();
        if (g.size() != n || out.size() != n) {
            fail(Errc::SizeMismatch, "CholeskyFactor::apply: length mismatch");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto li = lower_.row(i);
            double acc = 0.0;
            for (std::size_t k = 0; k <= i; ++k) acc += li[k] * g[k];
            out[i] = acc;
        }
    }

private:
    explicit CholeskyFactor(DenseMatrix lower) : lower_(std::move(lower)) {}
    friend CholeskyFactor cholesky(const DenseMatrix& m);

    DenseMatrix lower_;
};

/// Throws Errc::NotPositiveDefinite when a pivot falls to 1e-12 or below.
inline CholeskyFactor cholesky(const DenseMatrix& m) {
    if (!m.square()) fail(Errc::SizeMismatch, "cholesky: matrix must be square");
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > kSymmetryTolerance) {
                fail(Errc::Domain, "cholesky: matrix is not symmetric at (" + std::to_string(i) +
                                       "," + std::to_string(j) + ")");
            }
        }
    }

    DenseMatrix lower(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto li = lower.row(i);
        for (std::size_t j = 0; j <= i; ++j) {
            const auto lj = lower.row(j);
            double acc = m(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= li[k] * lj[k];
            if (i == j) {
                if (!(acc > kPivotTolerance)) {
                    fail(Errc::NotPositiveDefinite,
                         "cholesky: pivot " + std::to_string(i) + " is " + std::to_string(acc) +
                             " (matrix is not positive definite)");
                }
                li[i] = std::sqrt(acc);
            } else {
                li[j] = acc / lj[j];
            }
        }
    }
    return CholeskyFactor(std::move(lower));
}

}  // namespace dcoe

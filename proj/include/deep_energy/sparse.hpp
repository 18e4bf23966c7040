#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deep_energy/error.hpp"

namespace deep_energy {

/**
 * Square sparse matrix in compressed-row form with sorted column indices.
 *
 * Only Laplacian-type (symmetric) operators are built by this library, but
 * the container itself does not enforce symmetry; see is_symmetric().
 */
class CsrMatrix {
public:
    CsrMatrix() = default;

    CsrMatrix(std::size_t order, std::vector<std::size_t> row_offsets, std::vector<std::uint32_t> columns,
              std::vector<double> values)
        : order_(order), offsets_(std::move(row_offsets)), columns_(std::move(columns)), values_(std::move(values)) {
        if (offsets_.size() != order_ + 1 || offsets_.front() != 0 || offsets_.back() != columns_.size() ||
            columns_.size() != values_.size()) {
            throw DataError("inconsistent compressed-row arrays");
        }
        for (std::size_t r = 0; r < order_; ++r) {
            if (offsets_[r] > offsets_[r + 1]) throw DataError("row offsets must be non-decreasing");
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
                if (columns_[k] >= order_) throw DataError("column index out of range");
                if (k > offsets_[r] && columns_[k] <= columns_[k - 1]) {
                    throw DataError("column indices must be strictly increasing within a row");
                }
            }
        }
    }

    std::size_t order() const noexcept { return order_; }
    std::size_t nonzeros() const noexcept { return values_.size(); }

    std::span<const std::size_t> row_offsets() const noexcept { return offsets_; }
    std::span<const std::uint32_t> columns() const noexcept { return columns_; }
    std::span<const double> values() const noexcept { return values_; }

    /// Entry (r, c), zero when not stored.
    double coeff(std::size_t r, std::size_t c) const noexcept {
        for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
            if (columns_[k] == c) return values_[k];
            if (columns_[k] > c) break;
        }
        return 0.0;
    }

    /// out = A * x. Rows are independent, so the result is exact regardless of order.
    void multiply(std::span<const double> x, std::span<double> out) const {
        for (std::size_t r = 0; r < order_; ++r) {
            double acc = 0.0;
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) acc += values_[k] * x[columns_[k]];
            out[r] = acc;
        }
    }

    std::vector<double> multiply(std::span<const double> x) const {
        std::vector<double> out(order_);
        multiply(x, out);
        return out;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(order_, 0.0);
        for (std::size_t r = 0; r < order_; ++r) d[r] = coeff(r, r);
        return d;
    }

    /// x^T A x
    double quadratic_form(std::span<const double> x) const {
        double acc = 0.0;
        for (std::size_t r = 0; r < order_; ++r) {
            double row = 0.0;
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) row += values_[k] * x[columns_[k]];
            acc += x[r] * row;
        }
        return acc;
    }

    /// Copy of this matrix with `shift[i]` added to diagonal entry i. Missing
    /// diagonal entries are inserted.
    CsrMatrix plus_diagonal(std::span<const double> shift) const {
        std::vector<std::size_t> offsets(order_ + 1, 0);
        std::vector<std::uint32_t> cols;
        std::vector<double> vals;
        cols.reserve(columns_.size() + order_);
        vals.reserve(columns_.size() + order_);
        for (std::size_t r = 0; r < order_; ++r) {
            bool placed = false;
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
                if (!placed && columns_[k] >= r) {
                    if (columns_[k] == r) {
                        cols.push_back(columns_[k]);
                        vals.push_back(values_[k] + shift[r]);
                        placed = true;
                        continue;
                    }
                    cols.push_back(static_cast<std::uint32_t>(r));
                    vals.push_back(shift[r]);
                    placed = true;
                }
                cols.push_back(columns_[k]);
                vals.push_back(values_[k]);
            }
            if (!placed) {
                cols.push_back(static_cast<std::uint32_t>(r));
                vals.push_back(shift[r]);
            }
            offsets[r + 1] = cols.size();
        }
        return CsrMatrix(order_, std::move(offsets), std::move(cols), std::move(vals));
    }

    /// Exact structural and numerical symmetry (tolerance 0 by default).
    bool is_symmetric(double tol = 0.0) const {
        for (std::size_t r = 0; r < order_; ++r) {
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
                if (std::abs(values_[k] - coeff(columns_[k], r)) > tol) return false;
            }
        }
        return true;
    }

    /// Row-major dense copy; intended for small matrices in tests and tooling.
    std::vector<double> to_dense() const {
        std::vector<double> dense(order_ * order_, 0.0);
        for (std::size_t r = 0; r < order_; ++r) {
            for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) dense[r * order_ + columns_[k]] = values_[k];
        }
        return dense;
    }

private:
    std::size_t order_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<std::uint32_t> columns_;
    std::vector<double> values_;
};

} // namespace deep_energy

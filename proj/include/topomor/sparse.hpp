#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "topomor/errors.hpp"
#include "topomor/grid.hpp"

namespace topomor {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Triplet {
    Index row;
    Index col;
    double value;
};

/// Square sparse matrix in compressed sparse row layout with sorted
/// columns and a cached diagonal position per row.
class SparseOperator {
public:
    SparseOperator() = default;

    SparseOperator(Index n, std::vector<Index> row_offsets, std::vector<Index> columns,
                   std::vector<double> values)
        : n_(n),
          row_offsets_(std::move(row_offsets)),
          columns_(std::move(columns)),
          values_(std::move(values)) {
        if (static_cast<Index>(row_offsets_.size()) != n_ + 1 ||
            columns_.size() != values_.size() ||
            static_cast<std::size_t>(row_offsets_.back()) != columns_.size())
            throw UsageError("inconsistent CSR arrays");
        diag_pos_.assign(n_, -1);
        for (Index i = 0; i < n_; ++i)
            for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
                if (columns_[k] == i) diag_pos_[i] = k;
    }

    /// Build from unsorted (row, col, value) triplets; duplicates are summed.
    static SparseOperator from_triplets(Index n, std::vector<Triplet> t) {
        std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<Index> offsets(n + 1, 0), cols;
        std::vector<double> vals;
        cols.reserve(t.size());
        vals.reserve(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (!cols.empty() && k > 0 && t[k].row == t[k - 1].row && t[k].col == cols.back()) {
                vals.back() += t[k].value;
                continue;
            }
            cols.push_back(t[k].col);
            vals.push_back(t[k].value);
            ++offsets[t[k].row + 1];
        }
        for (Index i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
        return {n, std::move(offsets), std::move(cols), std::move(vals)};
    }

    static SparseOperator identity(Index n, double scale = 1.0) {
        std::vector<Index> offsets(n + 1), cols(n);
        for (Index i = 0; i <= n; ++i) offsets[i] = i;
        for (Index i = 0; i < n; ++i) cols[i] = i;
        return {n, std::move(offsets), std::move(cols), std::vector<double>(n, scale)};
    }

    static SparseOperator from_dense(const Matrix& a) {
        std::vector<Triplet> t;
        for (Index i = 0; i < a.rows(); ++i)
            for (Index j = 0; j < a.cols(); ++j)
                if (a(i, j) != 0.0) t.push_back({i, j, a(i, j)});
        return from_triplets(static_cast<Index>(a.rows()), std::move(t));
    }

    [[nodiscard]] Index size() const { return n_; }
    [[nodiscard]] std::size_t nonzeros() const { return values_.size(); }
    [[nodiscard]] const std::vector<Index>& row_offsets() const { return row_offsets_; }
    [[nodiscard]] const std::vector<Index>& columns() const { return columns_; }
    [[nodiscard]] const std::vector<double>& values() const { return values_; }
    [[nodiscard]] double diagonal(Index i) const {
        return diag_pos_[i] >= 0 ? values_[diag_pos_[i]] : 0.0;
    }

    /// Entry (i, j), zero if not stored.
    [[nodiscard]] double coeff(Index i, Index j) const {
        const auto first = columns_.begin() + row_offsets_[i];
        const auto last = columns_.begin() + row_offsets_[i + 1];
        const auto it = std::lower_bound(first, last, j);
        return (it != last && *it == j) ? values_[it - columns_.begin()] : 0.0;
    }

    /// y = A x
    void apply(const Vector& x, Vector& y) const {
        if (x.size() != n_) throw UsageError("operator/vector size mismatch");
        y.resize(n_);
        for (Index i = 0; i < n_; ++i) {
            double s = 0.0;
            for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
                s += values_[k] * x[columns_[k]];
            y[i] = s;
        }
    }

    [[nodiscard]] Vector operator*(const Vector& x) const {
        Vector y;
        apply(x, y);
        return y;
    }

    [[nodiscard]] Matrix to_dense() const {
        Matrix a = Matrix::Zero(n_, n_);
        for (Index i = 0; i < n_; ++i)
            for (Index k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
                a(i, columns_[k]) = values_[k];
        return a;
    }

private:
    Index n_ = 0;
    std::vector<Index> row_offsets_{0};
    std::vector<Index> columns_;
    std::vector<double> values_;
    std::vector<Index> diag_pos_;
};

}  // namespace topomor

#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "topomor/errors.hpp"
#include "topomor/grid.hpp"
#include "topomor/sparse.hpp"

namespace topomor {

/// Geometric aggregation hierarchy of a structured grid. Cells are merged
/// 2^d -> 1 (coordinate // 2 on every axis longer than one cell), so an odd
/// axis leaves a trailing aggregate of one cell along that axis.
///
/// Depends only on the grid, so it is built once per run and reused.
struct MgTopology {
    std::vector<std::array<Index, 3>> level_dims;
    /// aggregate[l][i]: index on level l+1 of fine cell i on level l.
    std::vector<std::vector<Index>> aggregate;
    /// members[l]: CSR-style list of level-l cells per level-(l+1) aggregate.
    std::vector<std::vector<Index>> member_offsets;
    std::vector<std::vector<Index>> members;

    [[nodiscard]] int num_levels() const { return static_cast<int>(level_dims.size()); }
    [[nodiscard]] Index level_size(int l) const {
        return level_dims[l][0] * level_dims[l][1] * level_dims[l][2];
    }
};

/// Halve the grid until the coarsest level has at most `max_coarse`
/// unknowns. The fine level is always coarsened at least once when possible.
inline MgTopology build_topology(const StructuredGrid& grid, Index max_coarse = 1000) {
    MgTopology topo;
    std::array<Index, 3> dims{grid.dims(0), grid.dims(1), grid.dim() == 3 ? grid.dims(2) : 1};
    topo.level_dims.push_back(dims);
    auto size_of = [](const std::array<Index, 3>& d) { return d[0] * d[1] * d[2]; };
    while (true) {
        const bool can_coarsen = dims[0] > 1 || dims[1] > 1 || dims[2] > 1;
        if (!can_coarsen) break;
        if (topo.num_levels() > 1 && size_of(dims) <= max_coarse) break;
        std::array<Index, 3> cd{};
        for (int a = 0; a < 3; ++a) cd[a] = (dims[a] + 1) / 2;
        std::vector<Index> agg(size_of(dims));
        for (Index k = 0; k < dims[2]; ++k)
            for (Index j = 0; j < dims[1]; ++j)
                for (Index i = 0; i < dims[0]; ++i)
                    agg[i + dims[0] * (j + dims[1] * k)] = i / 2 + cd[0] * (j / 2 + cd[1] * (k / 2));
        const Index nc = size_of(cd);
        std::vector<Index> offsets(nc + 1, 0), mem(agg.size());
        for (Index c : agg) ++offsets[c + 1];
        for (Index c = 0; c < nc; ++c) offsets[c + 1] += offsets[c];
        std::vector<Index> fill(offsets.begin(), offsets.end() - 1);
        for (Index i = 0; i < static_cast<Index>(agg.size()); ++i) mem[fill[agg[i]]++] = i;
        topo.aggregate.push_back(std::move(agg));
        topo.member_offsets.push_back(std::move(offsets));
        topo.members.push_back(std::move(mem));
        topo.level_dims.push_back(cd);
        dims = cd;
    }
    return topo;
}

/// Galerkin product R A R^T for unit-weight aggregation R.
inline SparseOperator galerkin_coarsen(const SparseOperator& fine, const std::vector<Index>& aggregate,
                                       const std::vector<Index>& member_offsets,
                                       const std::vector<Index>& members) {
    const Index nc = static_cast<Index>(member_offsets.size()) - 1;
    const auto& off = fine.row_offsets();
    const auto& col = fine.columns();
    const auto& val = fine.values();
    std::vector<Index> offsets(nc + 1, 0), cols;
    std::vector<double> vals;
    std::vector<std::pair<Index, double>> row;
    for (Index c = 0; c < nc; ++c) {
        row.clear();
        for (Index m = member_offsets[c]; m < member_offsets[c + 1]; ++m) {
            const Index i = members[m];
            for (Index k = off[i]; k < off[i + 1]; ++k) row.emplace_back(aggregate[col[k]], val[k]);
        }
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k > 0 && row[k].first == row[k - 1].first) {
                vals.back() += row[k].second;
                continue;
            }
            cols.push_back(row[k].first);
            vals.push_back(row[k].second);
        }
        offsets[c + 1] = static_cast<Index>(cols.size());
    }
    return {nc, std::move(offsets), std::move(cols), std::move(vals)};
}

/// One forward then one backward Gauss-Seidel sweep on A x = b, in place.
inline void symmetric_gauss_seidel(const SparseOperator& a, const Vector& b, Vector& x) {
    const auto& off = a.row_offsets();
    const auto& col = a.columns();
    const auto& val = a.values();
    auto relax = [&](Index i) {
        double s = b[i];
        double d = 0.0;
        for (Index k = off[i]; k < off[i + 1]; ++k) {
            if (col[k] == i) d = val[k];
            else s -= val[k] * x[col[k]];
        }
        x[i] = s / d;
    };
    for (Index i = 0; i < a.size(); ++i) relax(i);
    for (Index i = a.size(); i-- > 0;) relax(i);
}

/// Piecewise-constant prolongation under-corrects smooth error; scaling the
/// coarse correction by a constant in (0, 2) keeps the cycle linear and
/// symmetric while restoring near mesh-independent iteration counts.
inline constexpr double kDefaultCorrectionScale = 1.7;

/// Multigrid V-cycle preconditioner: one symmetric Gauss-Seidel pre- and
/// post-sweep per level and a dense Cholesky solve on the coarsest level.
/// Immutable once built; `apply` may be called concurrently. The topology
/// must outlive the hierarchy.
class MgHierarchy {
public:
    MgHierarchy(MgTopology&&, std::shared_ptr<const SparseOperator>, double = kDefaultCorrectionScale) = delete;
    MgHierarchy(const MgTopology& topo, std::shared_ptr<const SparseOperator> fine,
                double correction_scale = kDefaultCorrectionScale)
        : topo_(&topo), scale_(correction_scale) {
        if (!(correction_scale > 0.0 && correction_scale < 2.0))
            throw UsageError("coarse correction scale must lie in (0, 2)");
        if (!fine || fine->size() != topo.level_size(0))
            throw UsageError("fine operator does not match the multigrid topology");
        ops_.push_back(std::move(fine));
        for (int l = 0; l + 1 < topo.num_levels(); ++l)
            ops_.push_back(std::make_shared<const SparseOperator>(galerkin_coarsen(
                *ops_.back(), topo.aggregate[l], topo.member_offsets[l], topo.members[l])));
        coarse_ = Eigen::LLT<Matrix>(ops_.back()->to_dense());
        if (coarse_.info() != Eigen::Success)
            throw SingularOperatorError("coarsest multigrid operator is not positive definite");
    }

    [[nodiscard]] int num_levels() const { return static_cast<int>(ops_.size()); }
    [[nodiscard]] const SparseOperator& level_operator(int l) const { return *ops_[l]; }

    void apply(const Vector& r, Vector& z) const {
        if (r.size() != ops_.front()->size()) throw UsageError("V-cycle input size mismatch");
        z = cycle(0, r);
    }

    [[nodiscard]] Vector v_cycle(const Vector& r) const {
        Vector z;
        apply(r, z);
        return z;
    }

private:
    [[nodiscard]] Vector cycle(int l, const Vector& r) const {
        if (l + 1 == num_levels()) return coarse_.solve(r);
        const SparseOperator& a = *ops_[l];
        Vector z = Vector::Zero(r.size());
        symmetric_gauss_seidel(a, r, z);
        const Vector res = r - a * z;
        const auto& agg = topo_->aggregate[l];
        Vector rc = Vector::Zero(topo_->level_size(l + 1));
        for (Index i = 0; i < res.size(); ++i) rc[agg[i]] += res[i];
        const Vector zc = cycle(l + 1, rc);
        for (Index i = 0; i < z.size(); ++i) z[i] += scale_ * zc[agg[i]];
        symmetric_gauss_seidel(a, r, z);
        return z;
    }

    const MgTopology* topo_;
    double scale_;
    std::vector<std::shared_ptr<const SparseOperator>> ops_;
    Eigen::LLT<Matrix> coarse_;
};

inline MgHierarchy build_hierarchy(const MgTopology& topo,
                                   std::shared_ptr<const SparseOperator> fine,
                                   double correction_scale = kDefaultCorrectionScale) {
    return {topo, std::move(fine), correction_scale};
}

}  // namespace topomor

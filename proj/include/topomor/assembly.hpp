#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "topomor/errors.hpp"
#include "topomor/grid.hpp"
#include "topomor/sparse.hpp"

namespace topomor {

/// Power-law interpolation between void and solid conductivity.
struct SimpParams {
    double kappa_min = 1.0;
    double kappa_max = 100.0;
    double penal = 3.0;

    void validate() const {
        if (!(kappa_min > 0.0 && kappa_min < kappa_max))
            throw ConfigError("SIMP requires 0 < kappa_min < kappa_max");
        if (!(penal >= 1.0)) throw ConfigError("SIMP penalization must be >= 1");
    }

    bool operator==(const SimpParams&) const = default;
};

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

inline Vector simp_conductivity(const Vector& rho_filtered, const SimpParams& p) {
    Vector kappa(rho_filtered.size());
    const double span = p.kappa_max - p.kappa_min;
    for (Index i = 0; i < rho_filtered.size(); ++i)
        kappa[i] = p.kappa_min + std::pow(clamp_unit(rho_filtered[i]), p.penal) * span;
    return kappa;
}

inline Vector simp_derivative(const Vector& rho_filtered, const SimpParams& p) {
    Vector d(rho_filtered.size());
    const double span = p.kappa_max - p.kappa_min;
    for (Index i = 0; i < rho_filtered.size(); ++i)
        d[i] = p.penal * std::pow(clamp_unit(rho_filtered[i]), p.penal - 1.0) * span;
    return d;
}

/// Discrete diffusion operator together with the boundary part of the
/// right-hand side (Dirichlet lifting and Neumann inflow).
struct DiffusionSystem {
    SparseOperator op;
    Vector rhs_bc;
};

namespace detail {

// Assemble a two-point-flux operator row by row. `face_coef(cell, face)`
// returns the interior face transmissibility, `boundary(cell, face, diag,
// rhs)` accumulates boundary contributions, and `base_diag(cell)` seeds the
// diagonal (zero for diffusion, cell volume for the filter).
template <class FaceCoef, class Boundary, class BaseDiag>
SparseOperator assemble_two_point(const StructuredGrid& grid, FaceCoef&& face_coef,
                                  Boundary&& boundary, BaseDiag&& base_diag) {
    const Index n = grid.num_cells();
    std::vector<Index> offsets(n + 1, 0);
    std::vector<Index> cols;
    std::vector<double> vals;
    cols.reserve(static_cast<std::size_t>(n) * (2 * grid.dim() + 1));
    vals.reserve(cols.capacity());
    std::array<std::pair<Index, double>, 7> row{};
    for (Index i = 0; i < n; ++i) {
        int len = 0;
        double diag = base_diag(i);
        grid.for_each_face(i, [&](const CellFace& f) {
            if (f.on_boundary()) {
                boundary(i, f, diag);
                return;
            }
            const double c = face_coef(i, f);
            diag += c;
            row[len++] = {f.neighbor, -c};
        });
        row[len++] = {i, diag};
        std::sort(row.begin(), row.begin() + len,
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (int k = 0; k < len; ++k) {
            cols.push_back(row[k].first);
            vals.push_back(row[k].second);
        }
        offsets[i + 1] = static_cast<Index>(cols.size());
    }
    return {n, std::move(offsets), std::move(cols), std::move(vals)};
}

}  // namespace detail

/// Cell-centered finite-volume discretization of -div(kappa grad T).
///
/// Interior faces use the arithmetic mean of the adjacent conductivities.
/// A Dirichlet face sits half a cell from the center, giving the
/// transmissibility 2*kappa*area/h.
inline DiffusionSystem assemble_diffusion(const StructuredGrid& grid, const Vector& kappa) {
    if (kappa.size() != grid.num_cells()) throw UsageError("conductivity size mismatch");
    if (!grid.has_dirichlet())
        throw SingularOperatorError("diffusion operator has no Dirichlet face and is singular");
    for (Index i = 0; i < kappa.size(); ++i)
        if (!(kappa[i] > 0.0)) throw UsageError("conductivity must be positive");

    const auto& patches = grid.patches();
    Vector rhs = Vector::Zero(grid.num_cells());
    auto op = detail::assemble_two_point(
        grid,
        [&](Index i, const CellFace& f) {
            return 0.5 * (kappa[i] + kappa[f.neighbor]) * grid.face_area(f.axis) /
                   grid.spacing(f.axis);
        },
        [&](Index i, const CellFace& f, double& diag) {
            const auto& p = patches[f.patch];
            if (p.kind == BcKind::Dirichlet) {
                const double t = 2.0 * kappa[i] * grid.face_area(f.axis) / grid.spacing(f.axis);
                diag += t;
                rhs[i] += t * p.value;
            } else {
                rhs[i] += p.value * grid.face_area(f.axis);
            }
        },
        [](Index) { return 0.0; });
    return {std::move(op), std::move(rhs)};
}

/// Helmholtz filter operator for -len^2 lap(rt) + rt = r, scaled by the cell
/// volume, with homogeneous Neumann conditions on the whole boundary.
inline SparseOperator assemble_filter(const StructuredGrid& grid, double length) {
    if (!(length >= 0.0)) throw ConfigError("filter length must be non-negative");
    const double l2 = length * length;
    return detail::assemble_two_point(
        grid,
        [&](Index, const CellFace& f) {
            return l2 * grid.face_area(f.axis) / grid.spacing(f.axis);
        },
        [](Index, const CellFace&, double&) {},
        [&](Index) { return grid.cell_volume(); });
}

/// Volumetric source integrated over each cell.
inline Vector source_rhs(const StructuredGrid& grid, const Vector& source) {
    if (source.size() != grid.num_cells()) throw UsageError("source size mismatch");
    return source * grid.cell_volume();
}

/// Filter length from the radius of its support domain.
inline double filter_length_from_support(double support_radius) {
    return support_radius / (2.0 * std::sqrt(3.0));
}

}  // namespace topomor

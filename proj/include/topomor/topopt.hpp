#pragma once

#include <cmath>
#include <memory>
#include <utility>

#include "topomor/assembly.hpp"
#include "topomor/errors.hpp"
#include "topomor/grid.hpp"
#include "topomor/krylov.hpp"
#include "topomor/multigrid.hpp"
#include "topomor/sparse.hpp"

namespace topomor {

/// Volume-averaged squared deviation of the temperature from `t_ref`.
inline double objective(const StructuredGrid& grid, const Vector& temperature, double t_ref) {
    if (temperature.size() != grid.num_cells()) throw UsageError("temperature size mismatch");
    return (temperature.array() - t_ref).square().sum() * grid.cell_volume() / grid.domain_volume();
}

/// Derivative of `objective` with respect to the cell temperatures. The
/// adjoint system uses the forward operator with homogeneous Dirichlet data.
inline Vector adjoint_rhs(const StructuredGrid& grid, const Vector& temperature, double t_ref) {
    if (temperature.size() != grid.num_cells()) throw UsageError("temperature size mismatch");
    return (2.0 * grid.cell_volume() / grid.domain_volume()) * (temperature.array() - t_ref).matrix();
}

/// Per-cell y^T (dA/d rho_i) x, with dA/d rho_i from the SIMP derivative
/// through arithmetic face averaging and the Dirichlet face diagonal.
inline Vector operator_derivative_form(const StructuredGrid& grid, const Vector& y,
                                       const Vector& x, const Vector& rho_filtered,
                                       const SimpParams& simp) {
    const Vector dk = simp_derivative(rho_filtered, simp);
    const auto& patches = grid.patches();
    Vector out(grid.num_cells());
    for (Index i = 0; i < grid.num_cells(); ++i) {
        double s = 0.0;
        grid.for_each_face(i, [&](const CellFace& f) {
            const double t = grid.face_area(f.axis) / grid.spacing(f.axis);
            if (!f.on_boundary()) {
                s += 0.5 * t * (y[i] - y[f.neighbor]) * (x[i] - x[f.neighbor]);
            } else if (patches[f.patch].kind == BcKind::Dirichlet) {
                s += 2.0 * t * y[i] * x[i];
            }
        });
        out[i] = dk[i] * s;
    }
    return out;
}

/// dJ/d rho_filtered from a forward field T and adjoint field T_a:
/// T_a^T (db/d rho_i - dA/d rho_i T). The db term is the Dirichlet lifting,
/// which depends on the conductivity of the boundary cell.
inline Vector design_gradient(const StructuredGrid& grid, const Vector& temperature,
                              const Vector& adjoint, const Vector& rho_filtered,
                              const SimpParams& simp) {
    if (temperature.size() != grid.num_cells() || adjoint.size() != grid.num_cells() ||
        rho_filtered.size() != grid.num_cells())
        throw UsageError("gradient field size mismatch");
    Vector g = -operator_derivative_form(grid, adjoint, temperature, rho_filtered, simp);
    const Vector dk = simp_derivative(rho_filtered, simp);
    const auto& patches = grid.patches();
    for (Index i = 0; i < grid.num_cells(); ++i) {
        double s = 0.0;
        grid.for_each_face(i, [&](const CellFace& f) {
            if (f.on_boundary() && patches[f.patch].kind == BcKind::Dirichlet)
                s += 2.0 * grid.face_area(f.axis) / grid.spacing(f.axis) * patches[f.patch].value;
        });
        g[i] += dk[i] * adjoint[i] * s;
    }
    return g;
}

struct ConstraintValue {
    double value = 0.0;
    Vector gradient;  // with respect to the filtered density
};

/// Volume fraction constraint mean(rho_filtered) - v_frac <= 0.
inline ConstraintValue volume_constraint(const StructuredGrid& grid, const Vector& rho_filtered,
                                         double volume_fraction) {
    ConstraintValue c;
    const double w = grid.cell_volume() / grid.domain_volume();
    c.value = rho_filtered.sum() * w - volume_fraction;
    c.gradient = Vector::Constant(grid.num_cells(), w);
    return c;
}

/// PDE (Helmholtz) density filter. Both directions solve the same SPD
/// system with multigrid-preconditioned CG.
class DensityFilter {
public:
    DensityFilter(const StructuredGrid& grid, double length, double tol = 1e-13)
        : cell_volume_(grid.cell_volume()), length_(length), tol_(tol) {
        op_ = std::make_shared<const SparseOperator>(assemble_filter(grid, length));
        if (length > 0.0) {
            topo_ = std::make_unique<MgTopology>(build_topology(grid));
            mg_ = std::make_unique<MgHierarchy>(*topo_, op_);
        }
    }

    [[nodiscard]] double length() const { return length_; }
    [[nodiscard]] const SparseOperator& op() const { return *op_; }

    /// Filtered density for a raw design field.
    [[nodiscard]] Vector forward(const Vector& rho) const {
        if (length_ == 0.0) return rho;
        Vector x = rho;
        solve(cell_volume_ * rho, x);
        return x;
    }

    /// Maps a sensitivity with respect to the filtered field to one with
    /// respect to the raw field: V F^{-1} g (F is symmetric).
    [[nodiscard]] Vector chain(const Vector& g_filtered) const {
        if (length_ == 0.0) return g_filtered;
        Vector y = g_filtered / cell_volume_;
        solve(g_filtered, y);
        return cell_volume_ * y;
    }

private:
    void solve(const Vector& b, Vector& x) const {
        PcgOptions opts;
        opts.max_iters = 500;
        const auto rep = pcg_solve(*op_, b, x, *mg_, {Criterion::W2, tol_}, opts);
        if (!rep.converged) throw NumericalBreakdown("density filter solve did not converge");
    }

    double cell_volume_;
    double length_;
    double tol_;
    std::shared_ptr<const SparseOperator> op_;
    std::unique_ptr<MgTopology> topo_;
    std::unique_ptr<MgHierarchy> mg_;
};

/// Finite-difference probe of the gradient convention on a tiny dense
/// instance. Returns the relative error of design_gradient on a few cells.
inline double gradient_convention_error() {
    const std::vector<Index> dims{4, 4};
    std::vector<BoundaryPatch> patches;
    patches.push_back(full_side("cold", 1, Side::High, BcKind::Dirichlet, 1.0, dims));
    patches.push_back(whole_boundary("wall", BcKind::Neumann, 0.0));
    const StructuredGrid grid(dims, {1.0, 1.0}, patches);
    const SimpParams simp{1.0, 10.0, 3.0};
    const Index n = grid.num_cells();
    Vector rho(n);
    for (Index i = 0; i < n; ++i) rho[i] = 0.2 + 0.6 * static_cast<double>((i * 7) % n) / n;
    const Vector q = source_rhs(grid, Vector::Ones(n));
    auto solve_t = [&](const Vector& r) {
        const auto sys = assemble_diffusion(grid, simp_conductivity(r, simp));
        return Vector(sys.op.to_dense().llt().solve(q + sys.rhs_bc));
    };
    const double t_ref = 0.5;
    const Vector t = solve_t(rho);
    const auto sys = assemble_diffusion(grid, simp_conductivity(rho, simp));
    const Vector ta = sys.op.to_dense().llt().solve(adjoint_rhs(grid, t, t_ref));
    const Vector g = design_gradient(grid, t, ta, rho, simp);
    double worst = 0.0;
    for (Index i : {1, 6, 13}) {
        const double h = 1e-6;
        Vector rp = rho, rm = rho;
        rp[i] += h;
        rm[i] -= h;
        const double fd = (objective(grid, solve_t(rp), t_ref) - objective(grid, solve_t(rm), t_ref)) / (2 * h);
        worst = std::max(worst, std::abs(g[i] - fd) / std::max(std::abs(fd), 1e-300));
    }
    return worst;
}

}  // namespace topomor

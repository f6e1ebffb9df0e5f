#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "topomor/assembly.hpp"
#include "topomor/config.hpp"
#include "topomor/errors.hpp"
#include "topomor/grid.hpp"
#include "topomor/io.hpp"
#include "topomor/krylov.hpp"
#include "topomor/mma.hpp"
#include "topomor/multigrid.hpp"
#include "topomor/rom.hpp"
#include "topomor/topopt.hpp"

namespace topomor {

enum class Equation { Forward, Adjoint };

/// Operator of one design iteration plus its multigrid hierarchy, built on
/// first use and shared by the forward and adjoint solves.
class LinearSystem {
public:
    LinearSystem(std::shared_ptr<const SparseOperator>, MgTopology&&, double = kDefaultCorrectionScale) = delete;
    LinearSystem(std::shared_ptr<const SparseOperator> op, const MgTopology& topo,
                 double correction_scale = kDefaultCorrectionScale)
        : op_(std::move(op)), topo_(&topo), scale_(correction_scale), norm_A_(operator_inf_norm(*op_)) {}

    [[nodiscard]] const SparseOperator& op() const { return *op_; }
    [[nodiscard]] double norm_A() const { return norm_A_; }
    [[nodiscard]] bool has_hierarchy() const { return mg_.has_value(); }

    const MgHierarchy& hierarchy() {
        if (!mg_) mg_.emplace(*topo_, op_, scale_);
        return *mg_;
    }

private:
    std::shared_ptr<const SparseOperator> op_;
    const MgTopology* topo_;
    double scale_;
    double norm_A_;
    std::optional<MgHierarchy> mg_;
};

struct EquationSolve {
    Vector x;
    SolveReport report;
    std::optional<double> mor_measure;
    bool appended = false;
    long matvecs = 0;  // CG plus reduced-solve operator applications
    double wall_time = 0.0;
};

/// One forward or adjoint solve under a strategy. Tries the reduced model
/// first when enabled, falls back to multigrid CG, and appends FOM fields to
/// the basis. `warm_start` seeds the CG iterate.
inline EquationSolve solve_equation(Equation, const SolverStrategy& s, LinearSystem& sys,
                                    const Vector& rhs, ReducedBasis& basis, const Vector& warm_start,
                                    bool record_history = false) {
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    const Index n = sys.op().size();
    if (rhs.size() != n) throw UsageError("right-hand side size mismatch");
    EquationSolve out;
    const SolverKind fom_kind = s.mode == FomMode::OneShot ? SolverKind::FomOneShot : SolverKind::FomFull;
    out.report.solver_kind = fom_kind;
    out.report.norm_A = sys.norm_A();

    const double b_norm = rhs.norm();
    if (b_norm == 0.0) {
        out.x = Vector::Zero(n);
        out.report.converged = true;
        out.wall_time = out.report.wall_time = elapsed();
        return out;
    }

    Vector x0 = warm_start.size() == n ? warm_start : Vector::Zero(n);
    if (s.mor_enabled && !basis.empty()) {
        const auto red = reduced_solve(basis, sys.op(), rhs);
        if (red) {
            out.matvecs += red->matvecs;
            const auto a = assess(*red, rhs, sys.norm_A(), {s.criterion, s.tau_mor});
            out.mor_measure = a.measure;
            if (a.accepted) {
                out.x = red->x;
                auto& r = out.report;
                r.solver_kind = SolverKind::Mor;
                r.converged = true;
                r.matvecs = red->matvecs;
                r.norm_b = b_norm;
                r.norm_x = red->coeffs.norm();
                const auto rec = make_iterate_record(a.residual_norm, b_norm, sys.norm_A(), r.norm_x);
                r.final_w1 = rec.w1;
                r.final_w2 = rec.w2;
                out.wall_time = r.wall_time = elapsed();
                return out;
            }
            if (s.mor_warm_start) x0 = red->x;
        }
    }

    PcgOptions opts;
    opts.norm_A = sys.norm_A();
    opts.record_history = record_history;
    StopCriterion stop{s.criterion, s.tau_fom};
    if (s.mode == FomMode::OneShot) {
        opts.max_iters = 1;
        stop.tol = 0.0;
    } else {
        opts.max_iters = s.max_cg_iterations;
    }
    const MgHierarchy& mg = sys.hierarchy();
    out.report = pcg_solve(sys.op(), rhs, x0, mg, stop, opts);
    out.report.solver_kind = fom_kind;
    out.x = std::move(x0);
    out.matvecs += out.report.matvecs;
    if (s.mor_enabled) out.appended = basis.append(out.x) != AppendResult::Rejected;
    out.wall_time = out.report.wall_time = elapsed();
    return out;
}

/// Everything a caller may want to inspect after the solves of an iteration.
struct IterationState {
    int iteration = 0;
    const StructuredGrid* grid = nullptr;
    const Vector* rho = nullptr;
    const Vector* rho_filtered = nullptr;
    const SparseOperator* op = nullptr;
    const Vector* rhs_forward = nullptr;
    const Vector* rhs_adjoint = nullptr;
    const Vector* temperature = nullptr;
    const Vector* adjoint = nullptr;
    const Vector* gradient_filtered = nullptr;  // dJ/d rho_filtered
    const ReducedBasis* basis_forward = nullptr;
    const ReducedBasis* basis_adjoint = nullptr;
    const EquationSolve* forward = nullptr;
    const EquationSolve* adjoint_solve = nullptr;
    double objective = 0.0;
    double norm_A = 0.0;
};

struct RunHooks {
    std::function<void(const IterationRecord&)> on_record;
    std::function<void(const IterationState&)> observer;
    bool record_cg_history = false;  // keep every CG iterate's measures in the reports
};

struct RunResult {
    Vector rho;
    Vector rho_filtered;
    Vector temperature;
    Vector adjoint;
    std::vector<IterationRecord> history;
    long reductions_forward = 0;
    long reductions_adjoint = 0;
    std::array<double, 3> time_by_kind{};  // indexed by SolverKind
    double solver_time = 0.0;
    double final_objective = 0.0;
    double final_volume = 0.0;      // mean filtered density of the final design
    double final_constraint = 0.0;  // final_volume - volume_fraction
    int completed_iterations = 0;
    std::optional<std::string> error;
    long total_cg_iterations() const {
        long s = 0;
        for (const auto& r : history) s += r.forward.cg_iterations + r.adjoint.cg_iterations;
        return s;
    }
};

/// Design loop: filter, assemble, forward and adjoint solves, gradient,
/// MMA update, for a fixed number of iterations. Solver failures stop the
/// loop and are reported in `error` together with the partial history.
inline RunResult run_optimization(const RunConfig& cfg, const RunHooks& hooks = {}) {
    cfg.validate();
    if (gradient_convention_error() > 1e-4)
        throw NumericalBreakdown("gradient convention probe disagrees with finite differences");

    const StructuredGrid grid = build_grid(cfg);
    const MgTopology topo = build_topology(grid);
    const DensityFilter filter(grid, cfg.resolved_filter_length());
    const Index n = grid.num_cells();
    const Vector source = source_rhs(grid, Vector::Constant(n, cfg.source));
    const SolverStrategy& strat = cfg.solver;

    RunResult res;
    res.rho = Vector::Constant(n, cfg.volume_fraction);
    res.temperature = Vector::Zero(n);
    res.adjoint = Vector::Zero(n);
    ReducedBasis basis_f(strat.r_forward), basis_a(strat.r_adjoint);
    MmaParams mp;
    mp.move_limit = cfg.move_limit;
    Mma mma(mp);
    double scale_f = 0.0, scale_g = 0.0;
    Vector dg;

    int it = 1;
    try {
        for (; it <= cfg.max_iterations; ++it) {
            const Vector rho_f = filter.forward(res.rho);
            auto assembled = assemble_diffusion(grid, simp_conductivity(rho_f, cfg.simp));
            LinearSystem sys(std::make_shared<const SparseOperator>(std::move(assembled.op)), topo,
                             strat.mg_correction_scale);
            const Vector b = source + assembled.rhs_bc;

            const EquationSolve fwd = solve_equation(Equation::Forward, strat, sys, b, basis_f, res.temperature,
                                                     hooks.record_cg_history);
            const Vector ba = adjoint_rhs(grid, fwd.x, cfg.t_ref);
            const EquationSolve adj = solve_equation(Equation::Adjoint, strat, sys, ba, basis_a, res.adjoint,
                                                     hooks.record_cg_history);
            res.temperature = fwd.x;
            res.adjoint = adj.x;

            const double j = objective(grid, fwd.x, cfg.t_ref);
            const Vector g_f = design_gradient(grid, fwd.x, adj.x, rho_f, cfg.simp);
            const ConstraintValue con = volume_constraint(grid, rho_f, cfg.volume_fraction);
            const Vector dj = filter.chain(g_f);
            if (dg.size() == 0) dg = filter.chain(con.gradient);  // constant over the run

            for (const auto* e : {&fwd, &adj}) {
                res.time_by_kind[static_cast<int>(e->report.solver_kind)] += e->wall_time;
                res.solver_time += e->wall_time;
            }
            res.reductions_forward += fwd.report.solver_kind == SolverKind::Mor;
            res.reductions_adjoint += adj.report.solver_kind == SolverKind::Mor;

            IterationRecord rec;
            rec.iteration = it;
            rec.objective = j;
            rec.constraint = con.value;
            auto fill = [&](EquationRecord& er, const EquationSolve& e, const ReducedBasis& basis) {
                er.mor_measure = e.mor_measure;
                er.kind = e.report.solver_kind;
                er.cg_iterations = e.report.iterations;
                er.matvecs = e.matvecs;
                er.basis_size = basis.size();
                er.final_measure = e.report.final_measure(strat.criterion);
            };
            fill(rec.forward, fwd, basis_f);
            fill(rec.adjoint, adj, basis_a);
            rec.wall_time = res.solver_time;

            if (hooks.observer) {
                IterationState st;
                st.iteration = it;
                st.grid = &grid;
                st.rho = &res.rho;
                st.rho_filtered = &rho_f;
                st.op = &sys.op();
                st.rhs_forward = &b;
                st.rhs_adjoint = &ba;
                st.temperature = &fwd.x;
                st.adjoint = &adj.x;
                st.gradient_filtered = &g_f;
                st.basis_forward = &basis_f;
                st.basis_adjoint = &basis_a;
                st.forward = &fwd;
                st.adjoint_solve = &adj;
                st.objective = j;
                st.norm_A = sys.norm_A();
                hooks.observer(st);
            }

            // Fixed scaling from the first iteration keeps the MMA subproblem
            // well proportioned without changing the problem over the run.
            if (it == 1) {
                const double mf = dj.cwiseAbs().maxCoeff();
                const double mg = dg.cwiseAbs().maxCoeff();
                scale_f = mf > 0.0 ? 1.0 / mf : 1.0;
                scale_g = mg > 0.0 ? 1.0 / mg : 1.0;
            }
            const MmaStep step = mma.update(res.rho, scale_f * j, scale_f * dj, scale_g * con.value, scale_g * dg);
            rec.mma_flagged = step.flagged;
            res.rho = step.x;
            res.history.push_back(rec);
            if (hooks.on_record) hooks.on_record(rec);
            res.completed_iterations = it;
            res.final_objective = j;
        }
    } catch (const std::exception& e) {
        res.error = "iteration " + std::to_string(it) + ": " + e.what();
    }

    res.rho_filtered = filter.forward(res.rho);
    res.final_volume = res.rho_filtered.mean();
    res.final_constraint = res.final_volume - cfg.volume_fraction;
    return res;
}

/// Plain-text summary of a run: final values, solver time per kind and
/// reduction counts.
inline std::string run_summary(const RunConfig& cfg, const RunResult& r) {
    std::ostringstream o;
    o << "strategy " << strategy_name(cfg.solver) << "\n";
    o << "criterion " << to_string(cfg.solver.criterion) << "\n";
    o << "iterations " << r.completed_iterations << " of " << cfg.max_iterations << "\n";
    o << "final_objective " << format_g17(r.final_objective) << "\n";
    o << "final_volume " << format_g17(r.final_volume) << "\n";
    o << "final_constraint " << format_g17(r.final_constraint) << "\n";
    o << "solver_walltime_s " << format_g17(r.solver_time) << "\n";
    for (SolverKind k : {SolverKind::FomFull, SolverKind::FomOneShot, SolverKind::Mor})
        o << "walltime_" << to_string(k) << "_s " << format_g17(r.time_by_kind[static_cast<int>(k)]) << "\n";
    o << "forward_reductions " << r.reductions_forward << "\n";
    o << "adjoint_reductions " << r.reductions_adjoint << "\n";
    o << "total_cg_iterations " << r.total_cg_iterations() << "\n";
    long mv = 0;
    for (const auto& h : r.history) mv += h.matvecs();
    o << "total_matvecs " << mv << "\n";
    if (r.error) o << "error " << *r.error << "\n";
    return o.str();
}

}  // namespace topomor

// Acceptance checks. Each check prints one PASS/FAIL line; the exit code is
// nonzero when any requested check fails.
#include <CLI11.hpp>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>

#include "topomor/driver.hpp"

using namespace topomor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector random_vector(Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

RunConfig case_2d(Index n, int iterations, const std::string& strategy) {
    RunConfig c = preset("paper-2d");
    c.dims = {n, n};
    c.max_iterations = iterations;
    c.solver = strategy_from_name(strategy, c.solver);
    return c;
}

RunConfig case_3d(Index n, int iterations, const std::string& strategy) {
    RunConfig c = preset("paper-3d");
    c.dims = {n, n, n};
    c.max_iterations = iterations;
    c.solver = strategy_from_name(strategy, c.solver);
    return c;
}

// Runs shared between checks requested in one invocation.
std::map<std::string, RunResult> g_runs;

const RunResult& cached_run(const std::string& key, const RunConfig& cfg, const RunHooks& hooks = {}) {
    auto it = g_runs.find(key);
    if (it != g_runs.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    RunResult r = run_optimization(cfg, hooks);
    std::fprintf(stderr, "  [%s: %d iterations in %.1f s%s]\n", key.c_str(), r.completed_iterations,
                 seconds_since(t0), r.error ? (", " + *r.error).c_str() : "");
    return g_runs.emplace(key, std::move(r)).first->second;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// ---------------------------------------------------------------------------

Outcome gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = preset("paper-2d");
    cfg.dims = {16, 16};
    const StructuredGrid grid = build_grid(cfg);
    const MgTopology topo = build_topology(grid);
    const DensityFilter filter(grid, cfg.resolved_filter_length());
    const Index n = grid.num_cells();
    const Vector source = source_rhs(grid, Vector::Constant(n, cfg.source));

    auto solve = [&](const SparseOperator& op, const Vector& b) {
        auto shared = std::make_shared<const SparseOperator>(op);
        const MgHierarchy mg(topo, shared);
        Vector x;
        PcgOptions o;
        o.max_iters = 1000;
        (void)pcg_solve(op, b, x, mg, {Criterion::W1, 1e-13}, o);
        return x;
    };
    auto temperature = [&](const Vector& rho_f, SparseOperator* op_out = nullptr) {
        auto sys = assemble_diffusion(grid, simp_conductivity(rho_f, cfg.simp));
        Vector t = solve(sys.op, source + sys.rhs_bc);
        if (op_out) *op_out = sys.op;
        return t;
    };
    auto j_of = [&](const Vector& rho) { return objective(grid, temperature(filter.forward(rho)), cfg.t_ref); };

    std::mt19937_64 rng(2024);
    const Vector rho = random_vector(n, rng, 0.1, 0.9);
    const Vector rho_f = filter.forward(rho);
    SparseOperator op;
    const Vector t = temperature(rho_f, &op);
    const Vector y = solve(op, adjoint_rhs(grid, t, cfg.t_ref));
    const Vector g = filter.chain(design_gradient(grid, t, y, rho_f, cfg.simp));

    std::uniform_int_distribution<Index> pick(0, n - 1);
    double worst = 0.0;
    std::string cells;
    for (int k = 0; k < 5; ++k) {
        const Index i = pick(rng);
        Vector rp = rho, rm = rho;
        rp[i] += 1e-6;
        rm[i] -= 1e-6;
        const double fd = (j_of(rp) - j_of(rm)) / 2e-6;
        worst = std::max(worst, rel(g[i], fd));
        cells += (k ? "," : "") + std::to_string(i);
    }
    const double dt = seconds_since(t0);
    return {worst <= 1e-5 && dt <= 30.0,
            fmt("16x16, cells %s: max rel error %.3e (limit 1e-5), %.2f s (limit 30 s)", cells.c_str(), worst, dt)};
}

Outcome span_check() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(99);
    double worst_angle = 0.0, worst_orth = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        ReducedBasis b(4);
        Matrix snaps(30, 12);
        for (int s = 0; s < 12; ++s) {
            snaps.col(s) = random_vector(30, rng);
            b.append(snaps.col(s));
        }
        if (b.size() != 4) return {false, fmt("trial %d ended with %d columns", trial, b.size())};
        Eigen::JacobiSVD<Matrix> ref(snaps.rightCols(4), Eigen::ComputeThinU);
        const Matrix q = ref.matrixU();
        const Matrix v = b.columns();
        // sine of the largest principal angle is the norm of (I - QQ')V
        const Matrix resid = v - q * (q.transpose() * v);
        const double sine = Eigen::JacobiSVD<Matrix>(resid).singularValues()[0];
        worst_angle = std::max(worst_angle, std::asin(std::min(1.0, sine)));
        worst_orth = std::max(worst_orth, (v.transpose() * v - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff());
    }
    const double dt = seconds_since(t0);
    return {worst_angle <= 1e-10 && worst_orth <= 1e-12 && dt <= 5.0,
            fmt("200 trials: max angle %.2e (limit 1e-10), max |V'V-I| %.2e (limit 1e-12), %.2f s", worst_angle,
                worst_orth, dt)};
}

Outcome measure_identity_check() {
    long checked = 0;
    double worst = 0.0;
    auto check_run = [&](const RunConfig& cfg) {
        RunHooks hooks;
        hooks.record_cg_history = true;
        hooks.observer = [&](const IterationState& s) {
            for (const EquationSolve* e : {s.forward, s.adjoint_solve}) {
                const SolveReport& r = e->report;
                if (!(r.norm_b > 0.0)) continue;
                for (const auto& h : r.history) {
                    const double pred = (1.0 + r.norm_A * h.x_norm / r.norm_b) * h.w2;
                    const double err = std::abs(h.w1 - pred) / std::max(h.w1, 1e-300);
                    worst = std::max(worst, err);
                    ++checked;
                }
            }
        };
        const RunResult res = run_optimization(cfg, hooks);
        if (res.error) throw NumericalBreakdown(*res.error);
    };
    check_run(case_2d(48, 40, "MOR_2_MGCG"));
    RunConfig w1 = case_2d(32, 20, "MOR_10_MGCG");
    w1.solver.criterion = Criterion::W1;
    w1.solver.tau_mor = 5e-3;
    check_run(w1);
    check_run(case_3d(16, 10, "MGCG"));
    return {checked > 0 && worst <= 1e-12,
            fmt("%ld CG iterates from three runs: max |w1-(1+|A||x|/|b|)w2|/w1 = %.2e (limit 1e-12)", checked, worst)};
}

struct Ratios {
    double forward = 0.0, adjoint = 0.0;
};
std::map<std::string, Ratios> g_final_ratios;

const RunResult& criterion_run(Criterion c) {
    RunConfig cfg = case_2d(90, 250, "MOR_10_MGCG");
    cfg.solver.criterion = c;
    cfg.solver.tau_mor = c == Criterion::W1 ? 5e-3 : 1e-6;
    const std::string key = std::string("2d-90-") + to_string(c);
    RunHooks hooks;
    hooks.observer = [&, key](const IterationState& s) {
        if (s.iteration != cfg.max_iterations) return;
        Ratios r;
        r.forward = s.norm_A * s.temperature->norm() / s.rhs_forward->norm();
        r.adjoint = s.norm_A * s.adjoint->norm() / s.rhs_adjoint->norm();
        g_final_ratios[key] = r;
    };
    return cached_run(key, cfg, hooks);
}

Outcome norm_ratio_check() {
    const RunResult& r = criterion_run(Criterion::W2);
    if (r.error) return {false, *r.error};
    const auto it = g_final_ratios.find("2d-90-w2");
    if (it == g_final_ratios.end()) return {false, "final iteration not observed"};
    const Ratios q = it->second;
    const double factor = q.adjoint / q.forward;
    return {r.completed_iterations >= 100 && factor >= 1e2,
            fmt("90x90 after %d iterations: |A||x|/|b| forward %.3e, adjoint %.3e, factor %.3e (need >= 1e2)",
                r.completed_iterations, q.forward, q.adjoint, factor)};
}

std::pair<double, double> acceptance_rates(const RunResult& r, int from, int to) {
    int n = 0, f = 0, a = 0;
    for (const auto& h : r.history) {
        if (h.iteration < from || h.iteration > to) continue;
        ++n;
        f += h.forward.kind == SolverKind::Mor;
        a += h.adjoint.kind == SolverKind::Mor;
    }
    return {n ? double(f) / n : 0.0, n ? double(a) / n : 0.0};
}

Outcome stopping_check() {
    const RunResult& w2 = criterion_run(Criterion::W2);
    const RunResult& w1 = criterion_run(Criterion::W1);
    if (w2.error || w1.error) return {false, w2.error ? *w2.error : *w1.error};
    const auto [f2, a2] = acceptance_rates(w2, 50, 250);
    const auto [f1, a1] = acceptance_rates(w1, 50, 250);
    const double gap2 = std::abs(f2 - a2), gap1 = f1 - a1;
    return {gap2 <= 0.20 && gap1 >= 0.30,
            fmt("iterations 50-250, r=10: w2/1e-6 forward %.3f adjoint %.3f gap %.3f (limit 0.20, margin %+.3f); "
                "w1/5e-3 forward %.3f adjoint %.3f gap %.3f (need 0.30, margin %+.3f)",
                f2, a2, gap2, 0.20 - gap2, f1, a1, gap1, gap1 - 0.30)};
}

Outcome interpolation_check() {
    int checked = 0;
    double worst_j = 0.0, worst_g = 0.0;
    std::string failure;
    auto check_run = [&](const RunConfig& cfg) {
        RunHooks hooks;
        hooks.observer = [&](const IterationState& s) {
            if (!s.forward->appended || !s.adjoint_solve->appended) return;
            const auto rf = reduced_solve(*s.basis_forward, *s.op, *s.rhs_forward);
            const auto ra = reduced_solve(*s.basis_adjoint, *s.op, *s.rhs_adjoint);
            if (!rf || !ra) {
                failure = "reduced system singular at iteration " + std::to_string(s.iteration);
                return;
            }
            const double jr = objective(*s.grid, rf->x, cfg.t_ref);
            const Vector gr = design_gradient(*s.grid, rf->x, ra->x, *s.rho_filtered, cfg.simp);
            worst_j = std::max(worst_j, rel(jr, s.objective));
            const double gmax = s.gradient_filtered->cwiseAbs().maxCoeff();
            worst_g = std::max(worst_g, (gr - *s.gradient_filtered).cwiseAbs().maxCoeff() / gmax);
            ++checked;
        };
        const RunResult res = run_optimization(cfg, hooks);
        if (res.error) failure = *res.error;
    };
    check_run(case_2d(48, 100, "MOR_2_MGCG"));
    check_run(case_3d(16, 60, "MOR_2_MGCG"));
    if (!failure.empty()) return {false, failure};
    return {checked > 0 && worst_j <= 1e-8 && worst_g <= 1e-6,
            fmt("%d iterations with both bases just updated: max rel objective error %.2e (limit 1e-8), "
                "max rel gradient error %.2e (limit 1e-6)",
                checked, worst_j, worst_g)};
}

long total_cg(const RunResult& r) { return r.total_cg_iterations(); }

Outcome cg_savings_check() {
    const auto t0 = std::chrono::steady_clock::now();
    const RunResult& base = cached_run("3d-48-MGCG", case_3d(48, 250, "MGCG"));
    const RunResult& mor = cached_run("3d-48-MOR_2_MGCG", case_3d(48, 250, "MOR_2_MGCG"));
    if (base.error || mor.error) return {false, base.error ? *base.error : *mor.error};
    const double ratio = double(total_cg(mor)) / double(total_cg(base));
    const double dj = rel(mor.final_objective, base.final_objective);
    const bool complete = base.completed_iterations == 250 && mor.completed_iterations == 250;
    return {complete && ratio <= 0.5 && dj <= 0.05 && std::abs(mor.final_constraint) <= 1e-3,
            fmt("48^3, 250 iterations: CG iterations %ld vs %ld (ratio %.3f, limit 0.5), objective %.6e vs %.6e "
                "(diff %.2f%%, limit 5%%), volume violation %.2e (limit 1e-3), reductions %ld/%ld, %.0f s",
                total_cg(mor), total_cg(base), ratio, mor.final_objective, base.final_objective, 100 * dj,
                std::abs(mor.final_constraint), mor.reductions_forward, mor.reductions_adjoint, seconds_since(t0))};
}

Outcome time_savings_check() {
    const RunResult& base = cached_run("3d-48-MGCG_1", case_3d(48, 250, "MGCG_1"));
    const RunResult& mor = cached_run("3d-48-MOR_2_MGCG_1", case_3d(48, 250, "MOR_2_MGCG_1"));
    if (base.error || mor.error) return {false, base.error ? *base.error : *mor.error};
    const double ratio = mor.solver_time / base.solver_time;
    const double dj = rel(mor.final_objective, base.final_objective);
    return {ratio <= 0.8 && dj <= 0.05,
            fmt("48^3, 250 iterations: solver time %.2f s vs %.2f s (ratio %.3f, limit 0.8), objective %.6e vs "
                "%.6e (diff %.2f%%, limit 5%%), reductions %ld/%ld",
                mor.solver_time, base.solver_time, ratio, mor.final_objective, base.final_objective, 100 * dj,
                mor.reductions_forward, mor.reductions_adjoint)};
}

Outcome oneshot_check() {
    const RunResult& r = cached_run("3d-48-MGCG_1", case_3d(48, 250, "MGCG_1"));
    if (r.error) return {false, *r.error};
    int bad = 0;
    for (const auto& h : r.history)
        for (const auto* e : {&h.forward, &h.adjoint})
            bad += e->kind != SolverKind::FomOneShot || e->cg_iterations != 1;
    const bool ok = r.completed_iterations == 250 && std::isfinite(r.final_objective) &&
                    std::abs(r.final_constraint) <= 1e-3 && bad == 0;
    return {ok, fmt("48^3 MGCG_1: %d iterations, objective %.6e, volume violation %.2e, %d solves not a single "
                    "CG iteration",
                    r.completed_iterations, r.final_objective, std::abs(r.final_constraint), bad)};
}

// Unit-level solver properties, checked on fresh instances.
StructuredGrid unit_grid(std::vector<Index> dims) {
    std::vector<double> ext(dims.size(), 1.0);
    const int top = static_cast<int>(dims.size()) - 1;
    return StructuredGrid(dims, ext,
                          {full_side("cold", top, Side::High, BcKind::Dirichlet, 0.0, dims),
                           whole_boundary("wall", BcKind::Neumann, 0.0)});
}

Outcome solver_suite_check() {
    std::vector<std::string> failed;
    std::mt19937_64 rng(31);

    // energy-norm error of CG decreases monotonically
    double worst_rise = 0.0;
    for (Index n : {50, 120, 200}) {
        Matrix g(n, n);
        for (Index j = 0; j < n; ++j) g.col(j) = random_vector(n, rng);
        const Matrix a = g * g.transpose() + 0.1 * Matrix::Identity(n, n);
        const Vector b = random_vector(n, rng);
        const Vector xs = a.llt().solve(b);
        const double e0 = std::sqrt(xs.dot(a * xs));
        double prev = e0;
        PcgOptions o;
        o.max_iters = 3 * n;
        o.observer = [&](int, const Vector& x) {
            const Vector e = x - xs;
            const double en = std::sqrt(e.dot(a * e));
            worst_rise = std::max(worst_rise, (en - prev) / e0);
            prev = en;
        };
        Vector x;
        (void)pcg_solve(SparseOperator::from_dense(a), b, x, IdentityPreconditioner{}, {Criterion::W2, 1e-14}, o);
    }
    if (worst_rise > 1e-12) failed.push_back("monotonicity");

    // V-cycle symmetry
    double worst_sym = 0.0;
    for (const auto& dims : {std::vector<Index>{40, 40}, std::vector<Index>{13, 11, 9}}) {
        const auto grid = unit_grid(dims);
        const auto topo = build_topology(grid);
        auto op = std::make_shared<const SparseOperator>(
            assemble_diffusion(grid, random_vector(grid.num_cells(), rng, 1.0, 100.0)).op);
        const MgHierarchy h(topo, op);
        for (int k = 0; k < 5; ++k) {
            const Vector x = random_vector(grid.num_cells(), rng), y = random_vector(grid.num_cells(), rng);
            const double a = y.dot(h.v_cycle(x)), b = x.dot(h.v_cycle(y));
            worst_sym = std::max(worst_sym, std::abs(a - b) / std::max(std::abs(a), std::abs(b)));
        }
    }
    if (worst_sym > 1e-10) failed.push_back("symmetry");

    // mesh robustness
    std::vector<int> iters;
    for (Index n : {32, 64, 128}) {
        const auto grid = unit_grid({n, n});
        const auto topo = build_topology(grid);
        auto op = std::make_shared<const SparseOperator>(assemble_diffusion(grid, Vector::Ones(grid.num_cells())).op);
        const MgHierarchy h(topo, op);
        Vector x;
        const auto rep = pcg_solve(*op, source_rhs(grid, Vector::Ones(grid.num_cells())), x, h,
                                   {Criterion::W2, 1e-13});
        iters.push_back(rep.converged ? rep.iterations : 1 << 20);
    }
    const int hi = *std::max_element(iters.begin(), iters.end());
    const int lo = *std::min_element(iters.begin(), iters.end());
    if (hi > 2 * lo) failed.push_back("mesh robustness");

    // second-order convergence against T = x(1 - x)
    auto error_at = [](Index n) {
        const std::vector<Index> d{n, n};
        StructuredGrid g(d, {1.0, 1.0},
                         {full_side("l", 0, Side::Low, BcKind::Dirichlet, 0.0, d),
                          full_side("r", 0, Side::High, BcKind::Dirichlet, 0.0, d),
                          whole_boundary("w", BcKind::Neumann, 0.0)});
        const auto sys = assemble_diffusion(g, Vector::Ones(g.num_cells()));
        const Vector b = source_rhs(g, Vector::Constant(g.num_cells(), 2.0)) + sys.rhs_bc;
        const Vector t = sys.op.to_dense().llt().solve(b);
        double err = 0.0;
        for (Index c = 0; c < g.num_cells(); ++c) {
            const double x = g.center(c)[0];
            err = std::max(err, std::abs(t[c] - x * (1.0 - x)));
        }
        return err;
    };
    const double e8 = error_at(8), e16 = error_at(16), e32 = error_at(32);
    const double r1 = e8 / e16, r2 = e16 / e32;
    if (std::abs(r1 - 4.0) > 0.3 || std::abs(r2 - 4.0) > 0.3) failed.push_back("convergence order");

    std::string which;
    for (const auto& f : failed) which += " " + f;
    return {failed.empty(),
            fmt("energy error rise %.1e; V-cycle asymmetry %.1e (limit 1e-10); MGCG iterations %d/%d/%d on "
                "32^2/64^2/128^2; error ratios %.3f, %.3f (4 +- 0.3)%s%s",
                worst_rise, worst_sym, iters[0], iters[1], iters[2], r1, r2, failed.empty() ? "" : "; failed:",
                which.c_str())};
}

struct Check {
    const char* name;
    const char* title;
    std::function<Outcome()> run;
};

const std::vector<Check>& checks() {
    static const std::vector<Check> all{
        {"gradient", "composite gradient against central differences", gradient_check},
        {"span", "windowed basis recovers the span of the newest snapshots", span_check},
        {"w1w2", "w1/w2 identity on recorded CG iterates", measure_identity_check},
        {"norm-ratio", "adjoint norm ratio dominates the forward one", norm_ratio_check},
        {"stopping", "stopping measure drives adjoint acceptance", stopping_check},
        {"interpolation", "reduced model reproduces the latest full solves", interpolation_check},
        {"matvecs-3d", "reduced solves save CG work in 3D", cg_savings_check},
        {"walltime-3d", "reduced solves save time with one-shot CG in 3D", time_savings_check},
        {"oneshot", "one-shot multigrid CG run", oneshot_check},
        {"solver-suite", "CG and multigrid properties", solver_suite_check},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::vector<std::string> names;
    bool list = false;
    app.add_option("checks", names, "checks to run (default: all)");
    app.add_flag("--list", list, "print the check names");
    CLI11_PARSE(app, argc, argv);

    if (list) {
        for (const auto& c : checks()) std::printf("%-14s %s\n", c.name, c.title);
        return 0;
    }
    std::vector<const Check*> todo;
    for (const auto& c : checks())
        if (names.empty() || std::find(names.begin(), names.end(), c.name) != names.end()) todo.push_back(&c);
    if (todo.size() != (names.empty() ? checks().size() : names.size())) {
        std::fprintf(stderr, "unknown check name; use --list\n");
        return 2;
    }

    int failures = 0;
    for (const Check* c : todo) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c->run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %s (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c->name, c->title, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "topomor/errors.hpp"
#include "topomor/sparse.hpp"

namespace topomor {

enum class Criterion { W1, W2 };

/// Residual-based stopping rule: w1 = |r|/|b| or w2 = |r|/(|b| + |A||x|).
struct StopCriterion {
    Criterion kind = Criterion::W2;
    double tol = 1e-13;
};

enum class SolverKind { FomFull, FomOneShot, Mor };

inline const char* to_string(SolverKind k) {
    switch (k) {
        case SolverKind::FomFull: return "fom_full";
        case SolverKind::FomOneShot: return "fom_oneshot";
        case SolverKind::Mor: return "mor";
    }
    return "?";
}

inline const char* to_string(Criterion c) { return c == Criterion::W1 ? "w1" : "w2"; }

/// Both residual measures of one iterate plus the norms they are built from.
struct IterateRecord {
    double residual_norm = 0.0;
    double x_norm = 0.0;
    double w1 = 0.0;
    double w2 = 0.0;
};

struct SolveReport {
    int iterations = 0;
    long matvecs = 0;
    long preconditioner_applications = 0;
    double final_w1 = 0.0;
    double final_w2 = 0.0;
    double norm_A = 0.0;
    double norm_b = 0.0;
    double norm_x = 0.0;
    double wall_time = 0.0;
    bool converged = false;
    bool stagnated = false;  // stopped early: attainable accuracy reached before tol
    SolverKind solver_kind = SolverKind::FomFull;
    std::vector<IterateRecord> history;  // filled when requested

    [[nodiscard]] double final_measure(Criterion c) const {
        return c == Criterion::W1 ? final_w1 : final_w2;
    }
};

/// Maximum absolute row sum.
inline double operator_inf_norm(const SparseOperator& op) {
    double best = 0.0;
    const auto& off = op.row_offsets();
    const auto& val = op.values();
    for (Index i = 0; i < op.size(); ++i) {
        double s = 0.0;
        for (Index k = off[i]; k < off[i + 1]; ++k) s += std::abs(val[k]);
        best = std::max(best, s);
    }
    return best;
}

/// Value of the stopping measure, or nullopt when its denominator vanishes.
inline std::optional<double> residual_measure(Criterion c, double r_norm, double b_norm,
                                              double a_norm, double x_norm) {
    const double denom = c == Criterion::W1 ? b_norm : b_norm + a_norm * x_norm;
    if (!(denom > 0.0)) return std::nullopt;
    return r_norm / denom;
}

inline IterateRecord make_iterate_record(double r_norm, double b_norm, double a_norm,
                                         double x_norm) {
    IterateRecord rec{r_norm, x_norm, 0.0, 0.0};
    rec.w1 = residual_measure(Criterion::W1, r_norm, b_norm, a_norm, x_norm)
                 .value_or(std::numeric_limits<double>::infinity());
    rec.w2 = residual_measure(Criterion::W2, r_norm, b_norm, a_norm, x_norm)
                 .value_or(std::numeric_limits<double>::infinity());
    return rec;
}

struct IdentityPreconditioner {
    void apply(const Vector& r, Vector& z) const { z = r; }
};

struct PcgOptions {
    int max_iters = 1000;
    std::optional<double> norm_A;  // computed from the operator when absent
    bool record_history = false;
    /// Use b - A x for the stopping test on every iteration up to this size;
    /// above it, the recursive residual is used and confirmed at the end.
    Index true_residual_max_n = 100000;
    /// Called after each iteration with (iteration, x).
    std::function<void(int, const Vector&)> observer;
};

/// Preconditioned conjugate gradient started from `x` (overwritten with the
/// result). `Preconditioner` must provide `apply(r, z)` realizing a fixed
/// SPD linear map.
template <class Preconditioner>
SolveReport pcg_solve(const SparseOperator& op, const Vector& b, Vector& x,
                      const Preconditioner& precond, const StopCriterion& criterion,
                      const PcgOptions& opts = {}) {
    const auto start = std::chrono::steady_clock::now();
    const Index n = op.size();
    if (b.size() != n) throw UsageError("right-hand side size mismatch");
    if (x.size() != n) x = Vector::Zero(n);

    SolveReport rep;
    rep.norm_A = opts.norm_A ? *opts.norm_A : operator_inf_norm(op);
    rep.norm_b = b.norm();
    auto finish = [&](double r_norm) {
        rep.norm_x = x.norm();
        const auto rec = make_iterate_record(r_norm, rep.norm_b, rep.norm_A, rep.norm_x);
        rep.final_w1 = rec.w1;
        rep.final_w2 = rec.w2;
        rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return rep;
    };
    if (rep.norm_b == 0.0) {
        x.setZero();
        rep.converged = true;
        rep.final_w1 = rep.final_w2 = 0.0;
        rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return rep;
    }

    const bool true_residual = n <= opts.true_residual_max_n;
    Vector r(n), z(n), p(n), q(n), work(n);
    op.apply(x, q);
    ++rep.matvecs;
    r = b - q;

    auto measure = [&](double r_norm, double x_norm) {
        return *residual_measure(criterion.kind, r_norm, rep.norm_b, rep.norm_A, x_norm);
    };
    auto record = [&](double r_norm, double x_norm) {
        if (opts.record_history)
            rep.history.push_back(make_iterate_record(r_norm, rep.norm_b, rep.norm_A, x_norm));
    };

    double r_norm = r.norm();
    double x_norm = x.norm();
    record(r_norm, x_norm);
    if (r_norm == 0.0 || measure(r_norm, x_norm) <= criterion.tol) {
        rep.converged = true;
        return finish(r_norm);
    }

    precond.apply(r, z);
    ++rep.preconditioner_applications;
    p = z;
    double rz = r.dot(z);
    const double eps = std::numeric_limits<double>::epsilon();

    while (rep.iterations < opts.max_iters) {
        op.apply(p, q);
        ++rep.matvecs;
        const double pap = p.dot(q);
        if (!(pap > 1e3 * eps * rep.norm_A * p.squaredNorm()))
            throw NumericalBreakdown("conjugate gradient breakdown: non-positive curvature p'Ap = " +
                                     std::to_string(pap));
        const double alpha = rz / pap;
        x += alpha * p;
        r -= alpha * q;
        ++rep.iterations;

        x_norm = x.norm();
        if (true_residual) {
            op.apply(x, work);
            ++rep.matvecs;
            r_norm = (b - work).norm();
        } else {
            r_norm = r.norm();
        }
        record(r_norm, x_norm);
        if (opts.observer) opts.observer(rep.iterations, x);

        if (measure(r_norm, x_norm) <= criterion.tol) {
            if (true_residual) {
                rep.converged = true;
                break;
            }
            op.apply(x, work);
            ++rep.matvecs;
            work = b - work;
            r_norm = work.norm();
            if (measure(r_norm, x_norm) <= criterion.tol) {
                rep.converged = true;
                break;
            }
            r = work;  // recursive residual drifted; continue from the true one
        }
        if (rep.iterations >= opts.max_iters) break;
        // The updated residual has fallen below rounding level of the true
        // one: further steps cannot reduce the true residual. Stop unconverged.
        if (true_residual && r.norm() <= eps * r_norm) {
            rep.stagnated = true;
            break;
        }

        precond.apply(r, z);
        ++rep.preconditioner_applications;
        const double rz_new = r.dot(z);
        if (!(rz_new > 0.0)) {
            rep.stagnated = true;
            break;
        }
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    if (!true_residual && !rep.converged) {
        op.apply(x, work);
        ++rep.matvecs;
        r_norm = (b - work).norm();
    }
    return finish(r_norm);
}

}  // namespace topomor

#pragma once

#include <algorithm>
#include <cmath>

#include "topomor/errors.hpp"
#include "topomor/sparse.hpp"

namespace topomor {

struct MmaParams {
    double move_limit = 0.1;
    double asy_init = 0.5;
    double asy_incr = 1.2;
    double asy_decr = 0.7;
    double x_min = 0.0;
    double x_max = 1.0;
    double raa0 = 1e-5;
    double albefa = 0.1;

    void validate() const {
        if (!(move_limit > 0.0)) throw ConfigError("MMA move limit must be positive");
        if (!(x_max > x_min)) throw ConfigError("MMA bounds are empty");
        if (!(asy_init > 0.0 && asy_decr > 0.0 && asy_decr < 1.0 && asy_incr > 1.0))
            throw ConfigError("MMA asymptote parameters out of range");
    }
};

/// Convex separable approximation of a problem with one inequality
/// constraint:  min f~(x)  s.t.  g~(x) <= 0,  alpha <= x <= beta,
/// with f~(x) = r0 + sum p0/(U - x) + q0/(x - L) and g~ likewise.
struct MmaSubproblem {
    Vector alpha, beta, low, upp;
    Vector p0, q0, p1, q1;
    double r0 = 0.0;
    double r1 = 0.0;

    [[nodiscard]] double approx_objective(const Vector& x) const { return r0 + terms(p0, q0, x); }
    [[nodiscard]] double approx_constraint(const Vector& x) const { return r1 + terms(p1, q1, x); }

    /// Minimizer of f~ + lambda g~ over the box, in closed form per variable.
    [[nodiscard]] Vector primal(double lambda) const {
        Vector x(alpha.size());
        for (Index i = 0; i < x.size(); ++i) {
            const double sp = std::sqrt(p0[i] + lambda * p1[i]);
            const double sq = std::sqrt(q0[i] + lambda * q1[i]);
            const double xi = (sp * low[i] + sq * upp[i]) / (sp + sq);
            x[i] = std::clamp(xi, alpha[i], beta[i]);
        }
        return x;
    }

private:
    double terms(const Vector& p, const Vector& q, const Vector& x) const {
        return ((p.array() / (upp - x).array()) + (q.array() / (x - low).array())).sum();
    }
};

struct SubproblemSolution {
    Vector x;
    double lambda = 0.0;
    bool infeasible = false;
};

/// Dual method: the dual function is concave in lambda and g~(x(lambda)) is
/// non-increasing, so the multiplier is found by bisection.
inline SubproblemSolution solve_subproblem(const MmaSubproblem& sp) {
    SubproblemSolution s;
    s.x = sp.primal(0.0);
    if (sp.approx_constraint(s.x) <= 0.0) return s;
    double lo = 0.0;
    double hi = 1.0;
    while (sp.approx_constraint(sp.primal(hi)) > 0.0) {
        lo = hi;
        hi *= 4.0;
        if (hi > 1e40) {
            s.lambda = hi;
            s.x = sp.primal(hi);
            s.infeasible = true;
            return s;
        }
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
        if (sp.approx_constraint(sp.primal(mid)) > 0.0) lo = mid;
        else hi = mid;
        if (hi - lo <= 1e-15 * hi) break;
    }
    s.lambda = hi;
    s.x = sp.primal(hi);
    return s;
}

struct MmaStep {
    Vector x;
    bool flagged = false;  // linearized constraint unreachable within the move limits
    double lambda = 0.0;
};

/// Method of moving asymptotes for one inequality constraint and box bounds.
class Mma {
public:
    explicit Mma(MmaParams params = {}) : params_(params) { params_.validate(); }

    [[nodiscard]] int iteration() const { return iteration_; }
    [[nodiscard]] const Vector& lower_asymptotes() const { return low_; }
    [[nodiscard]] const Vector& upper_asymptotes() const { return upp_; }
    [[nodiscard]] const MmaParams& params() const { return params_; }

    /// Builds the subproblem at `x` and advances the asymptotes.
    MmaSubproblem build_subproblem(const Vector& x, double f, const Vector& df, double g,
                                   const Vector& dg) {
        const Index n = x.size();
        if (df.size() != n || dg.size() != n) throw UsageError("MMA gradient size mismatch");
        if (iteration_ > 0 && xold1_.size() != n) throw UsageError("MMA design size changed");
        const double span = params_.x_max - params_.x_min;
        ++iteration_;

        if (iteration_ <= 2) {
            low_ = x.array() - params_.asy_init * span;
            upp_ = x.array() + params_.asy_init * span;
        } else {
            for (Index i = 0; i < n; ++i) {
                const double trend = (x[i] - xold1_[i]) * (xold1_[i] - xold2_[i]);
                const double factor = trend > 0.0 ? params_.asy_incr
                                      : trend < 0.0 ? params_.asy_decr
                                                    : 1.0;
                double lo = x[i] - factor * (xold1_[i] - low_[i]);
                double up = x[i] + factor * (upp_[i] - xold1_[i]);
                lo = std::clamp(lo, x[i] - 10.0 * span, x[i] - 0.01 * span);
                up = std::clamp(up, x[i] + 0.01 * span, x[i] + 10.0 * span);
                low_[i] = lo;
                upp_[i] = up;
            }
        }

        MmaSubproblem sp;
        sp.low = low_;
        sp.upp = upp_;
        sp.alpha.resize(n);
        sp.beta.resize(n);
        for (Index i = 0; i < n; ++i) {
            sp.alpha[i] = std::max({params_.x_min, low_[i] + params_.albefa * (x[i] - low_[i]),
                                    x[i] - params_.move_limit * span});
            sp.beta[i] = std::min({params_.x_max, upp_[i] - params_.albefa * (upp_[i] - x[i]),
                                   x[i] + params_.move_limit * span});
        }
        const double xmami = std::max(span, 1e-5);
        auto approx = [&](double value, const Vector& d, Vector& p, Vector& q) {
            p.resize(n);
            q.resize(n);
            double r = value;
            for (Index i = 0; i < n; ++i) {
                const double ux = upp_[i] - x[i];
                const double xl = x[i] - low_[i];
                const double pos = std::max(d[i], 0.0);
                const double neg = std::max(-d[i], 0.0);
                const double reg = params_.raa0 / xmami;
                p[i] = ux * ux * (1.001 * pos + 0.001 * neg + reg);
                q[i] = xl * xl * (0.001 * pos + 1.001 * neg + reg);
                r -= p[i] / ux + q[i] / xl;
            }
            return r;
        };
        sp.r0 = approx(f, df, sp.p0, sp.q0);
        sp.r1 = approx(g, dg, sp.p1, sp.q1);

        xold2_ = iteration_ > 1 ? xold1_ : x;
        xold1_ = x;
        return sp;
    }

    /// One design update. The returned design satisfies the box bounds and
    /// |x_new - x| <= move_limit componentwise in floating point.
    MmaStep update(const Vector& x, double f, const Vector& df, double g, const Vector& dg) {
        const MmaSubproblem sp = build_subproblem(x, f, df, g, dg);
        const SubproblemSolution sol = solve_subproblem(sp);
        MmaStep step;
        step.x = sol.x;
        step.flagged = sol.infeasible;
        step.lambda = sol.lambda;
        const double move = params_.move_limit * (params_.x_max - params_.x_min);
        for (Index i = 0; i < x.size(); ++i) {
            double& v = step.x[i];
            v = std::clamp(v, params_.x_min, params_.x_max);
            while (v - x[i] > move) v = std::nextafter(v, x[i]);
            while (x[i] - v > move) v = std::nextafter(v, x[i]);
        }
        return step;
    }

private:
    MmaParams params_;
    int iteration_ = 0;
    Vector xold1_, xold2_, low_, upp_;
};

}  // namespace topomor

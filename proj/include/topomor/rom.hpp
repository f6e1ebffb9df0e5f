#pragma once

#include <Eigen/LU>
#include <Eigen/QR>

#include <optional>

#include "topomor/errors.hpp"
#include "topomor/krylov.hpp"
#include "topomor/sparse.hpp"

namespace topomor {

enum class AppendResult { Appended, Windowed, Rejected };

/// Orthonormal basis of the most recent `capacity` snapshots.
///
/// Keeps the factorization X = V R of the retained raw snapshots X, with V
/// orthonormal (n x k) and R upper triangular (k x k). Once full, a new
/// snapshot is orthogonalized against V and the oldest snapshot is dropped
/// by re-factorizing the trailing columns of the extended R factor, so V
/// keeps spanning exactly the retained snapshots.
class ReducedBasis {
public:
    explicit ReducedBasis(int capacity = 1) : capacity_(capacity) {
        if (capacity < 1) throw ConfigError("reduced basis capacity must be at least 1");
    }

    [[nodiscard]] int size() const { return static_cast<int>(v_.cols()); }
    [[nodiscard]] bool empty() const { return size() == 0; }
    [[nodiscard]] int capacity() const { return capacity_; }
    [[nodiscard]] long snapshot_count() const { return snapshots_; }
    [[nodiscard]] const Matrix& columns() const { return v_; }
    [[nodiscard]] const Matrix& r_factor() const { return r_; }

    /// Linear-dependence threshold relative to the snapshot norm.
    static constexpr double kRejectTol = 1e-12;

    AppendResult append(const Vector& x) {
        const double xnorm = x.norm();
        if (!(xnorm > 0.0)) return AppendResult::Rejected;
        if (!empty() && x.size() != v_.rows()) throw UsageError("snapshot size mismatch");
        const int k = size();

        // Classical Gram-Schmidt with one reorthogonalization pass.
        Vector w = x;
        Vector h = Vector::Zero(k);
        if (k > 0) {
            for (int pass = 0; pass < 2; ++pass) {
                const Vector c = v_.transpose() * w;
                w.noalias() -= v_ * c;
                h += c;
            }
        }
        const double beta = w.norm();
        if (beta < kRejectTol * xnorm) return AppendResult::Rejected;
        ++snapshots_;

        Matrix r_ext = Matrix::Zero(k + 1, k + 1);
        r_ext.topLeftCorner(k, k) = r_;
        r_ext.topRightCorner(k, 1) = h;
        r_ext(k, k) = beta;

        if (k < capacity_) {
            v_.conservativeResize(x.size(), k + 1);
            v_.col(k) = w / beta;
            r_ = std::move(r_ext);
            return AppendResult::Appended;
        }

        // [V v] holds k+1 orthonormal columns; drop the oldest snapshot by
        // factorizing the trailing k columns of the extended R.
        Matrix q(x.size(), k + 1);
        q.leftCols(k) = v_;
        q.col(k) = w / beta;
        const Matrix trailing = r_ext.rightCols(k);
        Eigen::HouseholderQR<Matrix> qr(trailing);
        const Matrix z = qr.householderQ() * Matrix::Identity(k + 1, k);
        r_ = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        v_ = q * z;
        return AppendResult::Windowed;
    }

private:
    int capacity_;
    long snapshots_ = 0;
    Matrix v_;
    Matrix r_;
};

/// Galerkin reduced solution. `av` caches A V so the residual can be formed
/// without another full operator application.
struct ReducedSolution {
    Vector x;
    Vector coeffs;
    Matrix av;
    long matvecs = 0;
};

inline constexpr double kReducedMaxCondition = 1e14;

/// Solve V^T A V c = V^T b and lift x = V c. Returns nullopt when the
/// reduced matrix is singular or too ill-conditioned to trust.
inline std::optional<ReducedSolution> reduced_solve(const ReducedBasis& basis,
                                                    const SparseOperator& op, const Vector& rhs) {
    if (basis.empty()) throw UsageError("reduced solve needs a nonempty basis");
    const Matrix& v = basis.columns();
    if (v.rows() != op.size() || rhs.size() != op.size())
        throw UsageError("reduced solve size mismatch");
    ReducedSolution sol;
    sol.av.resize(v.rows(), v.cols());
    Vector col;
    for (Index j = 0; j < v.cols(); ++j) {
        op.apply(v.col(j), col);
        sol.av.col(j) = col;
        ++sol.matvecs;
    }
    const Matrix a_hat = v.transpose() * sol.av;
    const Vector b_hat = v.transpose() * rhs;
    Eigen::PartialPivLU<Matrix> lu(a_hat);
    const double rcond = lu.rcond();
    if (!(rcond > 1.0 / kReducedMaxCondition)) return std::nullopt;
    sol.coeffs = lu.solve(b_hat);
    if (!sol.coeffs.allFinite()) return std::nullopt;
    sol.x = v * sol.coeffs;
    return sol;
}

struct Assessment {
    bool accepted = false;
    double measure = 0.0;
    double residual_norm = 0.0;
};

/// Residual check of a reduced solution with the solver's stopping measure.
/// Accepted iff measure <= tau.
inline Assessment assess(const ReducedSolution& sol, const Vector& rhs, double norm_A,
                         const StopCriterion& criterion) {
    Assessment a;
    a.residual_norm = (rhs - sol.av * sol.coeffs).norm();
    // V has orthonormal columns, so |x| = |coeffs|.
    const auto m = residual_measure(criterion.kind, a.residual_norm, rhs.norm(), norm_A,
                                    sol.coeffs.norm());
    a.measure = m ? *m : std::numeric_limits<double>::infinity();
    a.accepted = a.measure <= criterion.tol;
    return a;
}

}  // namespace topomor

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <random>

#include "topomor/assembly.hpp"
#include "topomor/grid.hpp"
#include "topomor/sparse.hpp"

namespace testing_support {

using namespace topomor;

// Unit square (or cube) with one Dirichlet side at the top and insulated walls.
inline StructuredGrid poisson_grid(std::vector<Index> dims, double t_d = 0.0) {
    std::vector<double> ext(dims.size(), 1.0);
    const int top = static_cast<int>(dims.size()) - 1;
    std::vector<BoundaryPatch> p;
    p.push_back(full_side("cold", top, Side::High, BcKind::Dirichlet, t_d, dims));
    p.push_back(whole_boundary("wall", BcKind::Neumann, 0.0));
    return StructuredGrid(dims, ext, p);
}

inline Vector random_vector(Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

inline Matrix random_spd(Index n, std::mt19937_64& rng) {
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j) g.col(j) = random_vector(n, rng);
    return g * g.transpose() + static_cast<double>(n) * Matrix::Identity(n, n);
}

inline Vector dense_solve(const SparseOperator& op, const Vector& b) {
    return op.to_dense().llt().solve(b);
}

// Orthonormal basis of the column span via SVD.
inline Matrix orth(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
    return svd.matrixU();
}

// sin of the largest principal angle between two equal-dimension subspaces
// given by orthonormal bases.
inline double largest_angle_sine(const Matrix& qa, const Matrix& qb) {
    const Matrix resid = qb - qa * (qa.transpose() * qb);
    Eigen::JacobiSVD<Matrix> svd(resid);
    return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testing_support

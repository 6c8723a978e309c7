#pragma once

#include <Eigen/Dense>

#include "flatdiv/rng.hpp"

namespace flatdiv {

using DenseMatrix = Eigen::MatrixXd;
using DenseVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Matrix with i.i.d. N(0, variance) entries, filled column-major in stream order.
DenseMatrix gaussian_matrix(RngStream& rng, Index rows, Index cols, double variance);
DenseVector gaussian_vector(RngStream& rng, Index dim, double variance);

/// Shape-checked product; throws std::invalid_argument naming both shapes.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// A^T A, symmetrized as (M + M^T)/2.
DenseMatrix gram(const DenseMatrix& a);

struct SymEigen {
  DenseVector values;   // descending
  DenseMatrix vectors;  // columns match values
};

/// Eigendecomposition of a symmetric matrix; m = V diag(values) V^T within
/// 1e-8 relative Frobenius. Throws on non-convergence.
SymEigen sym_eigen(const DenseMatrix& m);

}  // namespace flatdiv

#include "flatdiv/dense.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flatdiv {

DenseMatrix gaussian_matrix(RngStream& rng, Index rows, Index cols, double variance) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("gaussian_matrix: rows/cols must be >= 1");
  if (!(variance > 0.0)) throw std::invalid_argument("gaussian_matrix: variance must be > 0");
  DenseMatrix m(rows, cols);
  const double sd = std::sqrt(variance);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = sd * rng.next_gaussian();
  return m;
}

DenseVector gaussian_vector(RngStream& rng, Index dim, double variance) {
  if (dim < 1) throw std::invalid_argument("gaussian_vector: dim must be >= 1");
  if (!(variance > 0.0)) throw std::invalid_argument("gaussian_vector: variance must be > 0");
  DenseVector v(dim);
  const double sd = std::sqrt(variance);
  for (Index i = 0; i < dim; ++i) v[i] = sd * rng.next_gaussian();
  return v;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul: shape mismatch (" << a.rows() << "x" << a.cols() << ") * (" << b.rows()
       << "x" << b.cols() << ")";
    throw std::invalid_argument(os.str());
  }
  return a * b;
}

DenseMatrix gram(const DenseMatrix& a) {
  if (a.size() == 0) throw std::invalid_argument("gram: empty matrix");
  DenseMatrix m = a.transpose() * a;
  return 0.5 * (m + m.transpose());
}

SymEigen sym_eigen(const DenseMatrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sym_eigen: matrix not square");
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(m);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("sym_eigen: eigendecomposition did not converge");
  // Eigen returns ascending order; flip to descending.
  SymEigen out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

}  // namespace flatdiv

#include "flatdiv/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace flatdiv {
namespace {

DenseMatrix gather_rows(const DenseMatrix& X, std::span<const int> rows) {
  DenseMatrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(rows[i]);
  return out;
}

struct ForwardCache {
  DenseMatrix Z1, A1, P;  // n x hidden, n x hidden, n x classes
};

ForwardCache forward(const MlpModel& m, const DenseMatrix& X) {
  ForwardCache c;
  c.Z1 = (X * m.W1.transpose()).rowwise() + m.b1.transpose();
  c.A1 = c.Z1.cwiseMax(0.0);
  DenseMatrix Z2 = (c.A1 * m.W2.transpose()).rowwise() + m.b2.transpose();
  DenseVector row_max = Z2.rowwise().maxCoeff();
  c.P = (Z2.colwise() - row_max).array().exp();
  DenseVector row_sum = c.P.rowwise().sum();
  c.P.array().colwise() /= row_sum.array();
  return c;
}

}  // namespace

MlpModel MlpModel::init(int d_in, int hidden, int classes, RngStream& rng) {
  MlpModel m;
  m.W1 = gaussian_matrix(rng, hidden, d_in, 2.0 / d_in);
  m.b1 = DenseVector::Zero(hidden);
  m.W2 = gaussian_matrix(rng, classes, hidden, 2.0 / hidden);
  m.b2 = DenseVector::Zero(classes);
  return m;
}

MlpModel MlpModel::zeros(int d_in, int hidden, int classes) {
  MlpModel m;
  m.W1 = DenseMatrix::Zero(hidden, d_in);
  m.b1 = DenseVector::Zero(hidden);
  m.W2 = DenseMatrix::Zero(classes, hidden);
  m.b2 = DenseVector::Zero(classes);
  return m;
}

DenseVector MlpModel::flatten() const {
  DenseVector theta(n_params());
  Index off = 0;
  theta.segment(off, W1.size()) = Eigen::Map<const DenseVector>(W1.data(), W1.size());
  off += W1.size();
  theta.segment(off, b1.size()) = b1;
  off += b1.size();
  theta.segment(off, W2.size()) = Eigen::Map<const DenseVector>(W2.data(), W2.size());
  off += W2.size();
  theta.segment(off, b2.size()) = b2;
  return theta;
}

MlpModel MlpModel::unflatten(int d_in, int hidden, int classes, const DenseVector& theta) {
  MlpModel m = MlpModel::zeros(d_in, hidden, classes);
  if (theta.size() != m.n_params()) throw std::invalid_argument("unflatten: size mismatch");
  Index off = 0;
  Eigen::Map<DenseVector>(m.W1.data(), m.W1.size()) = theta.segment(off, m.W1.size());
  off += m.W1.size();
  m.b1 = theta.segment(off, m.b1.size());
  off += m.b1.size();
  Eigen::Map<DenseVector>(m.W2.data(), m.W2.size()) = theta.segment(off, m.W2.size());
  off += m.W2.size();
  m.b2 = theta.segment(off, m.b2.size());
  return m;
}

DenseMatrix MlpModel::forward_logits(const DenseMatrix& X) const {
  DenseMatrix A1 = ((X * W1.transpose()).rowwise() + b1.transpose()).cwiseMax(0.0);
  return (A1 * W2.transpose()).rowwise() + b2.transpose();
}

DenseMatrix MlpModel::forward_probs(const DenseMatrix& X) const {
  return forward(*this, X).P;
}

ForwardBackward mlp_forward_backward(const MlpModel& m, const DenseMatrix& X,
                                     std::span<const int> y) {
  const Index n = X.rows();
  if (n == 0) throw std::invalid_argument("mlp_forward_backward: empty batch");
  if (static_cast<Index>(y.size()) != n)
    throw std::invalid_argument("mlp_forward_backward: label count mismatch");
  ForwardCache c = forward(m, X);

  double loss = 0.0;
  for (Index i = 0; i < n; ++i)
    loss -= std::log(std::max(c.P(i, y[static_cast<std::size_t>(i)]), 1e-300));
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw std::runtime_error("mlp_forward_backward: non-finite loss");

  DenseMatrix dZ2 = c.P;
  for (Index i = 0; i < n; ++i) dZ2(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  dZ2 /= static_cast<double>(n);
  DenseMatrix gW2 = dZ2.transpose() * c.A1;
  DenseVector gb2 = dZ2.colwise().sum();
  DenseMatrix dZ1 = (dZ2 * m.W2).cwiseProduct((c.Z1.array() > 0.0).cast<double>().matrix());
  DenseMatrix gW1 = dZ1.transpose() * X;
  DenseVector gb1 = dZ1.colwise().sum();

  MlpModel g;
  g.W1 = std::move(gW1);
  g.b1 = std::move(gb1);
  g.W2 = std::move(gW2);
  g.b2 = std::move(gb2);
  ForwardBackward out;
  out.loss = loss;
  out.grad = g.flatten();
  if (!out.grad.allFinite()) throw std::runtime_error("mlp_forward_backward: non-finite gradient");
  return out;
}

std::vector<DenseVector> mlp_per_sample_gradients(const MlpModel& m, const DenseMatrix& X,
                                                  std::span<const int> y) {
  const Index n = X.rows();
  ForwardCache c = forward(m, X);
  std::vector<DenseVector> grads;
  grads.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    DenseVector dz2 = c.P.row(i);
    dz2[y[static_cast<std::size_t>(i)]] -= 1.0;
    DenseVector dz1 =
        (m.W2.transpose() * dz2).cwiseProduct((c.Z1.row(i).transpose().array() > 0.0).cast<double>().matrix());
    MlpModel g;
    g.W2 = dz2 * c.A1.row(i);
    g.b2 = dz2;
    g.W1 = dz1 * X.row(i);
    g.b1 = dz1;
    grads.push_back(g.flatten());
  }
  return grads;
}

DenseVector mlp_fisher_traces(const MlpModel& m, const DenseMatrix& X, std::span<const int> y) {
  const Index n = X.rows();
  ForwardCache c = forward(m, X);
  DenseVector out(n);
  for (Index i = 0; i < n; ++i) {
    DenseVector dz2 = c.P.row(i);
    dz2[y[static_cast<std::size_t>(i)]] -= 1.0;
    DenseVector dz1 =
        (m.W2.transpose() * dz2).cwiseProduct((c.Z1.row(i).transpose().array() > 0.0).cast<double>().matrix());
    out[i] = dz2.squaredNorm() * (1.0 + c.A1.row(i).squaredNorm()) +
             dz1.squaredNorm() * (1.0 + X.row(i).squaredNorm());
  }
  return out;
}

LossModel make_loss_model(const MlpModel& shape, const DenseMatrix& X, std::span<const int> y) {
  const int d_in = shape.d_in(), hidden = shape.hidden(), classes = shape.classes();
  std::vector<int> labels(y.begin(), y.end());
  LossModel lm;
  lm.n_samples = static_cast<int>(X.rows());
  lm.loss = [d_in, hidden, classes, &X, labels](const DenseVector& theta,
                                                std::span<const int> batch) {
    MlpModel m = MlpModel::unflatten(d_in, hidden, classes, theta);
    std::vector<int> yb;
    yb.reserve(batch.size());
    for (int i : batch) yb.push_back(labels[static_cast<std::size_t>(i)]);
    return mlp_forward_backward(m, gather_rows(X, batch), yb).loss;
  };
  lm.grad = [d_in, hidden, classes, &X, labels](const DenseVector& theta,
                                                std::span<const int> batch) {
    MlpModel m = MlpModel::unflatten(d_in, hidden, classes, theta);
    std::vector<int> yb;
    yb.reserve(batch.size());
    for (int i : batch) yb.push_back(labels[static_cast<std::size_t>(i)]);
    return mlp_forward_backward(m, gather_rows(X, batch), yb).grad;
  };
  return lm;
}

}  // namespace flatdiv

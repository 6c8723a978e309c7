#include "flatdiv/synthetic_task.hpp"

#include <stdexcept>

namespace flatdiv {

void SyntheticTaskConfig::validate() const {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("task: n_train/n_test must be >= 1");
  if (d_in < 1) throw std::invalid_argument("task: d_in must be >= 1");
  if (classes < 2) throw std::invalid_argument("task: need >= 2 classes");
  if (!(separation > 0.0)) throw std::invalid_argument("task: separation must be > 0");
  if (!(noise >= 0.0)) throw std::invalid_argument("task: noise must be >= 0");
  if (!(ood_base_scale >= 0.0)) throw std::invalid_argument("task: ood_base_scale must be >= 0");
  if (severities < 0) throw std::invalid_argument("task: severities must be >= 0");
}

namespace {

void fill_split(RngStream rng, const DenseMatrix& centers, double noise, int n,
                DenseMatrix& X, std::vector<int>& y) {
  const int classes = static_cast<int>(centers.rows());
  const Index d = centers.cols();
  X.resize(n, d);
  y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    y[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(classes)));
  for (int i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j)
      X(i, j) = centers(y[static_cast<std::size_t>(i)], j) + noise * rng.next_gaussian();
  }
}

}  // namespace

SyntheticTask make_synthetic_task(const SyntheticTaskConfig& cfg) {
  cfg.validate();
  SyntheticTask task;
  task.cfg = cfg;

  RngStream base(cfg.seed, 0);
  RngStream centers_rng = base.child(0);
  DenseMatrix centers(cfg.classes, cfg.d_in);
  for (Index i = 0; i < centers.rows(); ++i) {
    for (Index j = 0; j < centers.cols(); ++j) centers(i, j) = centers_rng.next_gaussian();
    centers.row(i) *= cfg.separation / centers.row(i).norm();
  }

  fill_split(base.child(1), centers, cfg.noise, cfg.n_train, task.X_train, task.y_train);
  fill_split(base.child(2), centers, cfg.noise, cfg.n_test, task.X_test, task.y_test);

  task.X_ood.reserve(static_cast<std::size_t>(cfg.severities));
  for (int s = 1; s <= cfg.severities; ++s) {
    RngStream ood_rng = base.child(static_cast<std::uint64_t>(2 + s));
    DenseMatrix X = task.X_test;
    const double scale = s * cfg.ood_base_scale;
    for (Index i = 0; i < X.rows(); ++i)
      for (Index j = 0; j < X.cols(); ++j) X(i, j) += scale * ood_rng.next_gaussian();
    task.X_ood.push_back(std::move(X));
  }
  return task;
}

}  // namespace flatdiv

#pragma once

#include <cstdint>
#include <vector>

#include "flatdiv/dense.hpp"

namespace flatdiv {

/// Gaussian-blob classification task with a corrupted-input OOD split.
/// Class centers are random directions scaled to `separation`; inputs add
/// isotropic noise; the OOD split at severity s adds extra input noise of
/// scale s * ood_base_scale to the test inputs.
struct SyntheticTaskConfig {
  std::uint64_t seed = 13;
  int n_train = 2000;
  int n_test = 1000;
  int d_in = 20;
  int classes = 5;
  double separation = 3.0;
  double noise = 1.2;
  double ood_base_scale = 0.6;
  int severities = 5;

  void validate() const;
};

struct SyntheticTask {
  SyntheticTaskConfig cfg;
  DenseMatrix X_train;  // n_train x d_in
  DenseMatrix X_test;   // n_test x d_in
  std::vector<int> y_train, y_test;
  std::vector<DenseMatrix> X_ood;  // [severities]; index s holds severity s+1
};

/// Deterministic in cfg.seed; train/test/OOD use disjoint substreams.
SyntheticTask make_synthetic_task(const SyntheticTaskConfig& cfg);

}  // namespace flatdiv

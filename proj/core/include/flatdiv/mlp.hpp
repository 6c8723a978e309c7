#pragma once

#include <span>
#include <vector>

#include "flatdiv/dense.hpp"
#include "flatdiv/metrics.hpp"

namespace flatdiv {

/// Two-layer rectifier network d_in -> hidden -> classes with softmax output.
/// Gradients come from hand-written backpropagation.
struct MlpModel {
  DenseMatrix W1;  // hidden x d_in
  DenseVector b1;  // hidden
  DenseMatrix W2;  // classes x hidden
  DenseVector b2;  // classes

  static MlpModel init(int d_in, int hidden, int classes, RngStream& rng);
  static MlpModel zeros(int d_in, int hidden, int classes);

  int d_in() const { return static_cast<int>(W1.cols()); }
  int hidden() const { return static_cast<int>(W1.rows()); }
  int classes() const { return static_cast<int>(W2.rows()); }
  Index n_params() const { return W1.size() + b1.size() + W2.size() + b2.size(); }

  /// Parameter order: vec(W1), b1, vec(W2), b2 (column-major vec).
  DenseVector flatten() const;
  static MlpModel unflatten(int d_in, int hidden, int classes, const DenseVector& theta);

  /// Rows of X are samples. Returns n x classes.
  DenseMatrix forward_logits(const DenseMatrix& X) const;
  DenseMatrix forward_probs(const DenseMatrix& X) const;
};

struct ForwardBackward {
  double loss = 0.0;
  DenseVector grad;  // flattened, same order as MlpModel::flatten
};

/// Mean cross-entropy over the batch and its exact gradient.
/// Throws on non-finite activations.
ForwardBackward mlp_forward_backward(const MlpModel& model, const DenseMatrix& X,
                                     std::span<const int> y);

/// One flattened gradient per sample (unaveraged per-sample cross-entropy).
std::vector<DenseVector> mlp_per_sample_gradients(const MlpModel& model, const DenseMatrix& X,
                                                  std::span<const int> y);

/// Per-sample squared gradient norms (Fisher-trace proxy), computed without
/// materializing the per-sample gradients: for one sample the layer gradients
/// are outer products, so ||dz2 a1^T||_F^2 = |dz2|^2 |a1|^2.
DenseVector mlp_fisher_traces(const MlpModel& model, const DenseMatrix& X, std::span<const int> y);

/// Adapts an MLP over a fixed dataset to the metrics module's model handle.
/// Batches are row indices into X, which is borrowed and must outlive the
/// handle. The handle is stateless: callers pass the flat parameter vector
/// explicitly and no model is mutated.
LossModel make_loss_model(const MlpModel& shape, const DenseMatrix& X, std::span<const int> y);

}  // namespace flatdiv

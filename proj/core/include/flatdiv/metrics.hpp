#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "flatdiv/dense.hpp"

namespace flatdiv {

/// Softmax outputs of m ensemble members over a shared evaluation set.
/// member_outputs[i] is n_samples x n_classes with rows summing to 1.
struct PredictionSet {
  std::vector<DenseMatrix> member_outputs;
  std::vector<int> labels;

  int members() const { return static_cast<int>(member_outputs.size()); }
  Index samples() const { return member_outputs.empty() ? 0 : member_outputs[0].rows(); }
  Index classes() const { return member_outputs.empty() ? 0 : member_outputs[0].cols(); }
  void validate() const;
};

/// Top-1 class of one output row; ties break to the lowest class index.
int argmax_class(const DenseMatrix& probs, Index row);

/// Eq-(1)-style diversity: per sample and class, population variance across
/// members, averaged over classes then samples. Needs m >= 2.
double variance_diversity(const PredictionSet& preds);

/// Fraction of samples where the two members' top-1 classes differ.
double disagreement(const DenseMatrix& member_a, const DenseMatrix& member_b);

/// Disagreement-error ratio: mean pairwise disagreement over unordered pairs
/// divided by mean member top-1 error. Throws at zero mean error.
double der(const PredictionSet& preds);

/// KL(f_i || f_j) averaged over ordered pairs i != j and over samples, with
/// probabilities clamped below at 1e-12.
double kl_diversity(const PredictionSet& preds);

/// Ensemble improvement rate (mean(member_errors) - ensemble_error) /
/// mean(member_errors). Throws at zero mean error.
double eir(std::span<const double> member_errors, double ensemble_error);

/// Differentiable model handle for sharpness measurements: loss and gradient
/// as functions of the flat parameter vector over a batch of dataset indices.
struct LossModel {
  std::function<double(const DenseVector& theta, std::span<const int> batch)> loss;
  std::function<DenseVector(const DenseVector& theta, std::span<const int> batch)> grad;
  int n_samples = 0;
};

struct SharpnessQuery {
  enum Norm { L2Adaptive, LinfAdaptive, AverageCase };
  double rho0 = 0.5;
  Norm norm = L2Adaptive;
  int n_batches = 100;
  int batch_size = 5;
  int ascent_steps = 20;
  std::optional<double> ascent_step_size;  // defaults to rho0 / 10
  int mc_samples = 10;                     // AverageCase only
};

struct SharpnessEstimate {
  double value = 0.0;
  int aborted_batches = 0;  // batches dropped after a non-finite loss
};

/// Adaptive sharpness around theta. Worst-case variants run projected
/// gradient ascent on delta with epsilon = T_theta delta, T_theta = diag|theta|,
/// over the l2 ball (or linf box) of radius rho0, tracking the best visited
/// increase per batch (so the result is >= 0); the average-case variant draws
/// eps ~ N(0, rho0^2 diag(T_theta^2)). Mean over n_batches of L(theta+eps*) - L(theta).
/// theta is never mutated.
SharpnessEstimate adaptive_sharpness(const DenseVector& theta, const LossModel& model,
                                     const SharpnessQuery& query, RngStream rng);

/// Squared l2 norm of the per-sample loss gradient (Fisher-trace proxy).
double fisher_trace(const LossModel& model, const DenseVector& theta, int sample_index);

}  // namespace flatdiv

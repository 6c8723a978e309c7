#pragma once

#include <span>
#include <string>
#include <vector>

#include "flatdiv/mlp.hpp"
#include "flatdiv/synthetic_task.hpp"

namespace flatdiv {

enum class Optimizer { Sgd, Sam, SharpBalance };

const char* to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct LrSchedule {
  double base = 0.1;
  std::vector<int> decay_epochs;  // lr multiplies by decay_factor at each
  double decay_factor = 0.1;

  double at(int epoch) const;
};

struct EnsembleConfig {
  int m = 3;
  Optimizer optimizer = Optimizer::Sam;
  double rho = 0.2;           // SAM perturbation radius
  double weight_decay = 5e-4;
  LrSchedule lr;
  int epochs = 50;
  int batch_size = 32;
  int hidden = 64;
  double k_frac = 0.4;        // SharpBalance: top-k% fraction
  int T_d = 10;               // SharpBalance: set re-selection period (epochs)
  bool combine_logits = false;  // ensemble combination: logit vs probability mean

  void validate() const;
};

/// Per member i: the sharpness-aware set and its complement; together they
/// partition the training indices.
struct SharpnessAwareSets {
  std::vector<std::vector<int>> sam_set;
  std::vector<std::vector<int>> normal_set;
};

/// Two-pass SAM with the practical normalized perturbation eps = rho g/|g|
/// (the quadratic-theory simulator uses the unnormalized variant; the two are
/// deliberately separate). Perturbation skipped when |g| < 1e-12 or rho == 0,
/// which makes the step identical to plain SGD. Updates the model in place
/// and returns the batch loss at the unperturbed point.
double sam_train_step(MlpModel& model, const DenseMatrix& Xb, std::span<const int> yb, double rho,
                      double lr, double weight_decay);

/// Per member j, ranks training samples by Fisher trace and keeps the top
/// ceil(k_frac n) (ties break to the lower index); member i's sharpness-aware
/// set is the union of every other member's top set.
SharpnessAwareSets select_sharpness_aware_sets(const std::vector<MlpModel>& ensemble,
                                               const DenseMatrix& X, const std::vector<int>& y,
                                               double k_frac);

struct EpochLog {
  int sam_batches = 0;
  int normal_batches = 0;
  bool sam_skipped = false;     // set was empty, objective skipped this epoch
  bool normal_skipped = false;
  double mean_loss = 0.0;
};

/// One pass over all training data in shuffled minibatches: each batch comes
/// from exactly one of the two sets, interleaved proportionally to set sizes;
/// sam_set batches take a SAM step, normal_set batches a plain SGD step.
EpochLog sharpbalance_epoch(MlpModel& model, std::span<const int> sam_set,
                            std::span<const int> normal_set, const DenseMatrix& X,
                            const std::vector<int>& y, double rho, double lr, double weight_decay,
                            int batch_size, RngStream& rng);

struct TrainedEnsemble {
  std::vector<MlpModel> members;
  int selections = 0;  // SharpBalance set recomputations performed
};

/// Trains m members from independent inits. SGD and SAM run every batch through
/// the same epoch routine (full normal set / full sam set); SharpBalance runs a
/// full-SAM warmup epoch, selects sets, then re-selects every T_d epochs.
/// Members may train in parallel; results do not depend on n_workers.
/// Throws on divergence (batch loss > 1e6).
TrainedEnsemble train_ensemble(const SyntheticTask& task, const EnsembleConfig& cfg, RngStream rng,
                               int n_workers = 1);

/// Mean of member softmax outputs, or softmax of mean logits.
DenseMatrix ensemble_probs(const std::vector<MlpModel>& members, const DenseMatrix& X,
                           bool combine_logits);

struct SplitMetrics {
  std::vector<double> member_acc;
  double member_acc_mean = 0.0;
  double ensemble_acc = 0.0;
  double der = 0.0;      // NaN when mean member error is 0
  double kl = 0.0;
  double var_div = 0.0;
  double eir = 0.0;      // NaN when mean member error is 0
};

SplitMetrics evaluate_split(const std::vector<MlpModel>& members, const DenseMatrix& X,
                            const std::vector<int>& y, bool combine_logits);

}  // namespace flatdiv

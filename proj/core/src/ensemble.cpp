#include "flatdiv/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "flatdiv/metrics.hpp"
#include "flatdiv/parallel.hpp"

namespace flatdiv {

const char* to_string(Optimizer o) {
  switch (o) {
    case Optimizer::Sgd: return "sgd";
    case Optimizer::Sam: return "sam";
    case Optimizer::SharpBalance: return "sharpbalance";
  }
  return "?";
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "sam") return Optimizer::Sam;
  if (s == "sharpbalance") return Optimizer::SharpBalance;
  throw std::invalid_argument("unknown optimizer '" + s + "' (sgd|sam|sharpbalance)");
}

double LrSchedule::at(int epoch) const {
  double lr = base;
  for (int e : decay_epochs)
    if (epoch >= e) lr *= decay_factor;
  return lr;
}

void EnsembleConfig::validate() const {
  if (m < 2) throw std::invalid_argument("EnsembleConfig: m must be >= 2");
  if (rho < 0.0) throw std::invalid_argument("EnsembleConfig: rho must be >= 0");
  if (weight_decay < 0.0) throw std::invalid_argument("EnsembleConfig: weight_decay must be >= 0");
  if (epochs < 1) throw std::invalid_argument("EnsembleConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("EnsembleConfig: batch_size must be >= 1");
  if (hidden < 1) throw std::invalid_argument("EnsembleConfig: hidden must be >= 1");
  if (!(k_frac > 0.0 && k_frac < 1.0))
    throw std::invalid_argument("EnsembleConfig: k_frac must be in (0, 1)");
  if (T_d < 1) throw std::invalid_argument("EnsembleConfig: T_d must be >= 1");
  if (!(lr.base > 0.0)) throw std::invalid_argument("EnsembleConfig: lr must be > 0");
}

namespace {

DenseMatrix gather_rows(const DenseMatrix& X, std::span<const int> rows) {
  DenseMatrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(rows[i]);
  return out;
}

void axpy_model(MlpModel& m, double a, const MlpModel& g) {
  m.W1 += a * g.W1;
  m.b1 += a * g.b1;
  m.W2 += a * g.W2;
  m.b2 += a * g.b2;
}

struct GradParts {
  double loss = 0.0;
  MlpModel g;
};

GradParts grad_parts(const MlpModel& m, const DenseMatrix& Xb, std::span<const int> yb) {
  ForwardBackward fb = mlp_forward_backward(m, Xb, yb);
  GradParts out;
  out.loss = fb.loss;
  out.g = MlpModel::unflatten(m.d_in(), m.hidden(), m.classes(), fb.grad);
  return out;
}

double grad_norm(const MlpModel& g) {
  return std::sqrt(g.W1.squaredNorm() + g.b1.squaredNorm() + g.W2.squaredNorm() +
                   g.b2.squaredNorm());
}

}  // namespace

double sam_train_step(MlpModel& model, const DenseMatrix& Xb, std::span<const int> yb, double rho,
                      double lr, double weight_decay) {
  GradParts first = grad_parts(model, Xb, yb);
  MlpModel* grad = &first.g;
  GradParts second;
  const double gn = grad_norm(first.g);
  if (rho > 0.0 && gn >= 1e-12) {
    const double scale = rho / gn;
    axpy_model(model, scale, first.g);         // climb to theta + eps
    second = grad_parts(model, Xb, yb);
    axpy_model(model, -scale, first.g);        // restore
    grad = &second.g;
  }
  if (weight_decay != 0.0) {
    model.W1 *= (1.0 - lr * weight_decay);
    model.b1 *= (1.0 - lr * weight_decay);
    model.W2 *= (1.0 - lr * weight_decay);
    model.b2 *= (1.0 - lr * weight_decay);
  }
  axpy_model(model, -lr, *grad);
  return first.loss;
}

SharpnessAwareSets select_sharpness_aware_sets(const std::vector<MlpModel>& ensemble,
                                               const DenseMatrix& X, const std::vector<int>& y,
                                               double k_frac) {
  const int m = static_cast<int>(ensemble.size());
  if (m < 2) throw std::invalid_argument("select_sharpness_aware_sets: need >= 2 members");
  const int n = static_cast<int>(X.rows());
  const int top_n = static_cast<int>(std::ceil(k_frac * n));

  std::vector<std::vector<int>> top_sets(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    DenseVector traces = mlp_fisher_traces(ensemble[static_cast<std::size_t>(j)], X, y);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return traces[a] > traces[b]; });
    order.resize(static_cast<std::size_t>(std::min(top_n, n)));
    top_sets[static_cast<std::size_t>(j)] = std::move(order);
  }

  SharpnessAwareSets sets;
  sets.sam_set.resize(static_cast<std::size_t>(m));
  sets.normal_set.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    std::vector<char> in_union(static_cast<std::size_t>(n), 0);
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      for (int idx : top_sets[static_cast<std::size_t>(j)]) in_union[static_cast<std::size_t>(idx)] = 1;
    }
    auto& sam = sets.sam_set[static_cast<std::size_t>(i)];
    auto& normal = sets.normal_set[static_cast<std::size_t>(i)];
    for (int idx = 0; idx < n; ++idx) (in_union[static_cast<std::size_t>(idx)] ? sam : normal).push_back(idx);
  }
  return sets;
}

EpochLog sharpbalance_epoch(MlpModel& model, std::span<const int> sam_set,
                            std::span<const int> normal_set, const DenseMatrix& X,
                            const std::vector<int>& y, double rho, double lr, double weight_decay,
                            int batch_size, RngStream& rng) {
  EpochLog log;
  log.sam_skipped = sam_set.empty();
  log.normal_skipped = normal_set.empty();

  struct Batch {
    std::vector<int> idx;
    bool is_sam = false;
    double pos = 0.0;
  };
  std::vector<Batch> batches;
  auto add_set = [&](std::span<const int> set, bool is_sam) {
    if (set.empty()) return;
    std::vector<int> shuffled(set.begin(), set.end());
    rng.shuffle(shuffled);
    const int nb = static_cast<int>((shuffled.size() + static_cast<std::size_t>(batch_size) - 1) /
                                    static_cast<std::size_t>(batch_size));
    for (int b = 0; b < nb; ++b) {
      Batch batch;
      const std::size_t lo = static_cast<std::size_t>(b) * static_cast<std::size_t>(batch_size);
      const std::size_t hi = std::min(shuffled.size(), lo + static_cast<std::size_t>(batch_size));
      batch.idx.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(lo),
                       shuffled.begin() + static_cast<std::ptrdiff_t>(hi));
      batch.is_sam = is_sam;
      batch.pos = (b + 0.5) / nb;
      batches.push_back(std::move(batch));
    }
  };
  add_set(sam_set, true);
  add_set(normal_set, false);
  std::stable_sort(batches.begin(), batches.end(), [](const Batch& a, const Batch& b) {
    if (a.pos != b.pos) return a.pos < b.pos;
    return a.is_sam && !b.is_sam;  // tie: sharpness objective first
  });

  double loss_sum = 0.0;
  for (const Batch& batch : batches) {
    std::vector<int> yb;
    yb.reserve(batch.idx.size());
    for (int i : batch.idx) yb.push_back(y[static_cast<std::size_t>(i)]);
    const double loss = sam_train_step(model, gather_rows(X, batch.idx), yb,
                                       batch.is_sam ? rho : 0.0, lr, weight_decay);
    loss_sum += loss;
    if (loss > 1e6)
      throw std::runtime_error("training diverged: batch loss " + std::to_string(loss));
    ++(batch.is_sam ? log.sam_batches : log.normal_batches);
  }
  log.mean_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
  return log;
}

TrainedEnsemble train_ensemble(const SyntheticTask& task, const EnsembleConfig& cfg, RngStream rng,
                               int n_workers) {
  cfg.validate();
  const int n = static_cast<int>(task.X_train.rows());
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const std::vector<int> none;

  TrainedEnsemble out;
  out.members.reserve(static_cast<std::size_t>(cfg.m));
  for (int i = 0; i < cfg.m; ++i) {
    RngStream init_rng = rng.child(1).child(static_cast<std::uint64_t>(i));
    out.members.push_back(
        MlpModel::init(task.cfg.d_in, cfg.hidden, task.cfg.classes, init_rng));
  }

  SharpnessAwareSets sets;
  bool have_sets = false;
  std::vector<std::string> member_errors(static_cast<std::size_t>(cfg.m));

  for (int ep = 0; ep < cfg.epochs; ++ep) {
    if (cfg.optimizer == Optimizer::SharpBalance && ep >= 1 && (ep - 1) % cfg.T_d == 0) {
      sets = select_sharpness_aware_sets(out.members, task.X_train, task.y_train, cfg.k_frac);
      have_sets = true;
      ++out.selections;
    }
    parallel_for(cfg.m, n_workers, [&](int i) {
      std::span<const int> sam_idx, normal_idx;
      switch (cfg.optimizer) {
        case Optimizer::Sgd:
          normal_idx = all;
          break;
        case Optimizer::Sam:
          sam_idx = all;
          break;
        case Optimizer::SharpBalance:
          if (!have_sets) {
            sam_idx = all;  // warmup epoch before the first selection
          } else {
            sam_idx = sets.sam_set[static_cast<std::size_t>(i)];
            normal_idx = sets.normal_set[static_cast<std::size_t>(i)];
          }
          break;
      }
      RngStream epoch_rng =
          rng.child(2).child(static_cast<std::uint64_t>(ep)).child(static_cast<std::uint64_t>(i));
      try {
        sharpbalance_epoch(out.members[static_cast<std::size_t>(i)], sam_idx, normal_idx,
                           task.X_train, task.y_train, cfg.rho, cfg.lr.at(ep), cfg.weight_decay,
                           cfg.batch_size, epoch_rng);
      } catch (const std::exception& e) {
        member_errors[static_cast<std::size_t>(i)] =
            "member " + std::to_string(i) + ", epoch " + std::to_string(ep) + ": " + e.what();
      }
    });
    for (const auto& err : member_errors)
      if (!err.empty()) throw std::runtime_error(err);
  }
  return out;
}

DenseMatrix ensemble_probs(const std::vector<MlpModel>& members, const DenseMatrix& X,
                           bool combine_logits) {
  if (members.empty()) throw std::invalid_argument("ensemble_probs: no members");
  if (combine_logits) {
    DenseMatrix logits = DenseMatrix::Zero(X.rows(), members[0].classes());
    for (const auto& m : members) logits += m.forward_logits(X);
    logits /= static_cast<double>(members.size());
    DenseVector row_max = logits.rowwise().maxCoeff();
    DenseMatrix P = (logits.colwise() - row_max).array().exp();
    DenseVector row_sum = P.rowwise().sum();
    P.array().colwise() /= row_sum.array();
    return P;
  }
  DenseMatrix probs = DenseMatrix::Zero(X.rows(), members[0].classes());
  for (const auto& m : members) probs += m.forward_probs(X);
  return probs / static_cast<double>(members.size());
}

namespace {

double accuracy(const DenseMatrix& probs, const std::vector<int>& y) {
  Index hits = 0;
  for (Index i = 0; i < probs.rows(); ++i)
    if (argmax_class(probs, i) == y[static_cast<std::size_t>(i)]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

}  // namespace

SplitMetrics evaluate_split(const std::vector<MlpModel>& members, const DenseMatrix& X,
                            const std::vector<int>& y, bool combine_logits) {
  SplitMetrics out;
  PredictionSet preds;
  preds.labels = y;
  for (const auto& m : members) preds.member_outputs.push_back(m.forward_probs(X));

  for (const auto& p : preds.member_outputs) out.member_acc.push_back(accuracy(p, y));
  out.member_acc_mean =
      std::accumulate(out.member_acc.begin(), out.member_acc.end(), 0.0) /
      static_cast<double>(out.member_acc.size());
  out.ensemble_acc = accuracy(ensemble_probs(members, X, combine_logits), y);
  out.var_div = variance_diversity(preds);
  out.kl = kl_diversity(preds);

  std::vector<double> errs;
  errs.reserve(out.member_acc.size());
  for (double a : out.member_acc) errs.push_back(1.0 - a);
  const double mean_err = std::accumulate(errs.begin(), errs.end(), 0.0) /
                          static_cast<double>(errs.size());
  if (mean_err > 0.0) {
    out.der = der(preds);
    out.eir = eir(errs, 1.0 - out.ensemble_acc);
  } else {
    out.der = std::numeric_limits<double>::quiet_NaN();
    out.eir = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

}  // namespace flatdiv

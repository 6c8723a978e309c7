#include "flatdiv/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace flatdiv {

void PredictionSet::validate() const {
  if (member_outputs.empty()) throw std::invalid_argument("PredictionSet: no members");
  const Index n = member_outputs[0].rows();
  const Index c = member_outputs[0].cols();
  if (c < 2) throw std::invalid_argument("PredictionSet: need >= 2 classes");
  for (const auto& m : member_outputs) {
    if (m.rows() != n || m.cols() != c)
      throw std::invalid_argument("PredictionSet: member shape mismatch");
    for (Index i = 0; i < n; ++i)
      if (std::abs(m.row(i).sum() - 1.0) > 1e-6)
        throw std::invalid_argument("PredictionSet: probability row does not sum to 1");
  }
  if (!labels.empty() && static_cast<Index>(labels.size()) != n)
    throw std::invalid_argument("PredictionSet: label count mismatch");
}

int argmax_class(const DenseMatrix& probs, Index row) {
  int best = 0;
  for (Index c = 1; c < probs.cols(); ++c)
    if (probs(row, c) > probs(row, best)) best = static_cast<int>(c);
  return best;
}

double variance_diversity(const PredictionSet& preds) {
  const int m = preds.members();
  if (m < 2) throw std::invalid_argument("variance_diversity: need >= 2 members");
  const Index n = preds.samples();
  const Index c = preds.classes();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < c; ++j) {
      double mean = 0.0, mean_sq = 0.0;
      for (const auto& out : preds.member_outputs) {
        const double p = out(i, j);
        mean += p;
        mean_sq += p * p;
      }
      mean /= m;
      mean_sq /= m;
      total += mean_sq - mean * mean;
    }
  }
  return total / (static_cast<double>(n) * static_cast<double>(c));
}

double disagreement(const DenseMatrix& member_a, const DenseMatrix& member_b) {
  if (member_a.rows() != member_b.rows())
    throw std::invalid_argument("disagreement: sample count mismatch");
  const Index n = member_a.rows();
  Index differ = 0;
  for (Index i = 0; i < n; ++i)
    if (argmax_class(member_a, i) != argmax_class(member_b, i)) ++differ;
  return static_cast<double>(differ) / static_cast<double>(n);
}

double der(const PredictionSet& preds) {
  const int m = preds.members();
  if (m < 2) throw std::invalid_argument("der: need >= 2 members");
  if (preds.labels.empty()) throw std::invalid_argument("der: labels required");
  double mean_dis = 0.0;
  int pairs = 0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      mean_dis += disagreement(preds.member_outputs[static_cast<std::size_t>(i)],
                               preds.member_outputs[static_cast<std::size_t>(j)]);
      ++pairs;
    }
  mean_dis /= pairs;
  double mean_err = 0.0;
  const Index n = preds.samples();
  for (const auto& out : preds.member_outputs) {
    Index wrong = 0;
    for (Index s = 0; s < n; ++s)
      if (argmax_class(out, s) != preds.labels[static_cast<std::size_t>(s)]) ++wrong;
    mean_err += static_cast<double>(wrong) / static_cast<double>(n);
  }
  mean_err /= m;
  if (mean_err <= 0.0) throw std::runtime_error("DER undefined at zero error");
  return mean_dis / mean_err;
}

double kl_diversity(const PredictionSet& preds) {
  const int m = preds.members();
  if (m < 2) throw std::invalid_argument("kl_diversity: need >= 2 members");
  constexpr double kFloor = 1e-12;
  const Index n = preds.samples();
  const Index c = preds.classes();
  double total = 0.0;
  int pairs = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      const auto& fi = preds.member_outputs[static_cast<std::size_t>(i)];
      const auto& fj = preds.member_outputs[static_cast<std::size_t>(j)];
      double pair_sum = 0.0;
      for (Index s = 0; s < n; ++s) {
        for (Index t = 0; t < c; ++t) {
          const double p = std::max(fi(s, t), kFloor);
          const double q = std::max(fj(s, t), kFloor);
          pair_sum += p * (std::log(p) - std::log(q));
        }
      }
      total += pair_sum / static_cast<double>(n);
      ++pairs;
    }
  }
  return total / pairs;
}

double eir(std::span<const double> member_errors, double ensemble_error) {
  if (member_errors.empty()) throw std::invalid_argument("eir: no member errors");
  double mean = 0.0;
  for (double e : member_errors) mean += e;
  mean /= static_cast<double>(member_errors.size());
  if (mean <= 0.0) throw std::runtime_error("EIR undefined at zero mean error");
  return (mean - ensemble_error) / mean;
}

namespace {

double vec_norm(const DenseVector& v) { return v.norm(); }

}  // namespace

SharpnessEstimate adaptive_sharpness(const DenseVector& theta, const LossModel& model,
                                     const SharpnessQuery& query, RngStream rng) {
  if (!(query.rho0 >= 0.0)) throw std::invalid_argument("adaptive_sharpness: rho0 must be >= 0");
  SharpnessEstimate est;
  if (query.rho0 == 0.0) return est;

  const double step = query.ascent_step_size.value_or(query.rho0 / 10.0);
  const DenseVector t_abs = theta.cwiseAbs();
  std::vector<int> batch(static_cast<std::size_t>(query.batch_size));
  double total = 0.0;
  int used = 0;
  for (int b = 0; b < query.n_batches; ++b) {
    for (auto& idx : batch)
      idx = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(model.n_samples)));
    const double base = model.loss(theta, batch);
    if (!std::isfinite(base)) {
      ++est.aborted_batches;
      continue;
    }
    double best = 0.0;
    bool aborted = false;

    if (query.norm == SharpnessQuery::AverageCase) {
      double acc = 0.0;
      int n_ok = 0;
      for (int s = 0; s < query.mc_samples; ++s) {
        DenseVector eps(theta.size());
        for (Index i = 0; i < eps.size(); ++i)
          eps[i] = query.rho0 * t_abs[i] * rng.next_gaussian();
        const double l = model.loss(theta + eps, batch);
        if (!std::isfinite(l)) {
          aborted = true;
          break;
        }
        acc += l - base;
        ++n_ok;
      }
      if (aborted || n_ok == 0) {
        ++est.aborted_batches;
        continue;
      }
      total += acc / n_ok;
      ++used;
      continue;
    }

    // worst-case variants: ascent on delta, epsilon = T_theta delta
    auto project = [&](DenseVector& delta) {
      if (query.norm == SharpnessQuery::L2Adaptive) {
        const double n = vec_norm(delta);
        if (n > query.rho0) delta *= query.rho0 / n;
      } else {
        delta = delta.cwiseMax(-query.rho0).cwiseMin(query.rho0);
      }
    };

    DenseVector g = model.grad(theta, batch);
    DenseVector delta = t_abs.cwiseProduct(g);  // sign-aligned start
    if (query.norm == SharpnessQuery::L2Adaptive) {
      const double n = vec_norm(delta);
      delta = n > 1e-12 ? DenseVector(delta * (query.rho0 / n)) : DenseVector::Zero(theta.size());
    } else {
      for (Index i = 0; i < delta.size(); ++i)
        delta[i] = delta[i] > 0 ? query.rho0 : (delta[i] < 0 ? -query.rho0 : 0.0);
    }
    for (int s = 0; s <= query.ascent_steps; ++s) {
      const DenseVector perturbed = theta + t_abs.cwiseProduct(delta);
      const double l = model.loss(perturbed, batch);
      if (!std::isfinite(l)) {
        aborted = true;
        break;
      }
      best = std::max(best, l - base);
      if (s == query.ascent_steps) break;
      DenseVector gd = t_abs.cwiseProduct(model.grad(perturbed, batch));
      delta += step * gd;
      project(delta);
    }
    if (aborted) {
      ++est.aborted_batches;
      continue;
    }
    total += best;
    ++used;
  }
  est.value = used > 0 ? total / used : 0.0;
  return est;
}

double fisher_trace(const LossModel& model, const DenseVector& theta, int sample_index) {
  const int idx[1] = {sample_index};
  DenseVector g = model.grad(theta, std::span<const int>(idx, 1));
  return g.squaredNorm();
}

}  // namespace flatdiv

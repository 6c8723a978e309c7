#include "flatdiv/quad_sim.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "flatdiv/parallel.hpp"

namespace flatdiv {

void QuadProblem::validate() const {
  if (A.rows() < 1 || A.cols() < 1) throw std::invalid_argument("QuadProblem: empty A");
  if (T.cols() != A.cols()) throw std::invalid_argument("QuadProblem: T/A column mismatch");
  if (theta_star.size() != A.cols()) throw std::invalid_argument("QuadProblem: theta_star dim mismatch");
  if (sigma < 0.0) throw std::invalid_argument("QuadProblem: sigma must be >= 0");
  if (eta < 0.0 || rho < 0.0) throw std::invalid_argument("QuadProblem: eta/rho must be >= 0");
  if (k < 0) throw std::invalid_argument("QuadProblem: k must be >= 0");
  if (S < 1) throw std::invalid_argument("QuadProblem: S must be >= 1");
  if (A.rows() % S != 0) throw std::invalid_argument("QuadProblem: n_tr must be divisible by S");
}

namespace {

DenseMatrix select_rows(const QuadProblem& p, DataSelector sel) {
  switch (sel.kind) {
    case DataSelector::Train:
      return p.A;
    case DataSelector::Test:
      return p.T;
    case DataSelector::Subset: {
      if (sel.subset < 0 || sel.subset >= p.S) {
        std::ostringstream os;
        os << "invalid subset index " << sel.subset << " (S=" << p.S << ")";
        throw std::invalid_argument(os.str());
      }
      const Index rows = p.n_tr() / p.S;
      return p.A.middleRows(static_cast<Index>(sel.subset) * rows, rows);
    }
  }
  throw std::logic_error("unreachable");
}

DenseVector beta_pow(const DenseVector& evals, double eta, double rho, int k) {
  DenseVector b = DenseVector::Ones(evals.size()) - eta * evals -
                  (eta * rho) * evals.cwiseProduct(evals);
  DenseVector out(b.size());
  for (Index i = 0; i < b.size(); ++i) out[i] = std::pow(b[i], k);
  return out;
}

// max of 1/2 e^T diag(evals) e - c^T e over ||e|| <= rho0, evals descending
double ball_max_core(const DenseVector& evals, const DenseVector& c, double rho0) {
  if (rho0 == 0.0) return 0.0;
  const double lmax = evals[0];
  const double cn = c.norm();
  if (cn == 0.0) return 0.5 * rho0 * rho0 * lmax;

  auto objective = [&](const DenseVector& e) {
    return 0.5 * e.cwiseProduct(e).dot(evals) - c.dot(e);
  };
  auto norm_at = [&](double lam) {
    double s = 0.0;
    for (Index i = 0; i < evals.size(); ++i) {
      double d = lam - evals[i];
      s += (c[i] / d) * (c[i] / d);
    }
    return std::sqrt(s);
  };

  // hard case: b orthogonal to the top eigenspace and interior secular norm
  const double top_tol = 1e-9 * std::max(1.0, std::abs(lmax));
  double c_top_sq = 0.0;
  for (Index i = 0; i < evals.size(); ++i)
    if (lmax - evals[i] < top_tol) c_top_sq += c[i] * c[i];
  if (std::sqrt(c_top_sq) <= 1e-14 * cn) {
    double n0_sq = 0.0;
    for (Index i = 0; i < evals.size(); ++i) {
      if (lmax - evals[i] < top_tol) continue;
      double y = c[i] / (lmax - evals[i]);
      n0_sq += y * y;
    }
    if (n0_sq <= rho0 * rho0) {
      DenseVector e = DenseVector::Zero(evals.size());
      for (Index i = 0; i < evals.size(); ++i)
        if (lmax - evals[i] >= top_tol) e[i] = -c[i] / (lmax - evals[i]);
      e[0] += std::sqrt(rho0 * rho0 - n0_sq);
      return objective(e);
    }
  }

  double lo = lmax;
  double hi = lmax + cn / rho0;
  if (norm_at(hi) > rho0 * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << "trust-region secular equation not bracketed: lambda_max=" << lmax << " |c|=" << cn
       << " rho0=" << rho0 << " norm(hi)=" << norm_at(hi);
    throw std::runtime_error(os.str());
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (norm_at(mid) > rho0 ? lo : hi) = mid;
  }
  const double lam = hi;  // feasible side
  DenseVector e(evals.size());
  for (Index i = 0; i < evals.size(); ++i) e[i] = -c[i] / (lam - evals[i]);
  e *= rho0 / e.norm();  // boundary maximizer
  return objective(e);
}

double ball_max_pga_core(const DenseVector& evals, const DenseVector& c, double rho0, int steps,
                         double step_size, RngStream* random_start) {
  if (rho0 == 0.0) return 0.0;
  auto objective = [&](const DenseVector& e) {
    return 0.5 * e.cwiseProduct(e).dot(evals) - c.dot(e);
  };
  DenseVector e = DenseVector::Zero(evals.size());
  if (random_start != nullptr) {
    for (Index i = 0; i < e.size(); ++i) e[i] = random_start->next_gaussian();
    e *= rho0 / e.norm();
  } else {
    e[0] = c[0] > 0.0 ? -rho0 : rho0;  // top eigenvector, ascending sign
  }
  double best = std::max(0.0, objective(e));
  for (int s = 0; s < steps; ++s) {
    e += step_size * (evals.cwiseProduct(e) - c);
    double n = e.norm();
    if (n > rho0) e *= rho0 / n;
    best = std::max(best, objective(e));
  }
  return best;
}

struct CellSpec {
  int k = 0;
  double eta = 0.0, rho = 0.0;
};

struct SweepRequest {
  Index n_tr = 0, d_in = 0, n_te = 0;
  int S = 1;
  DenseVector theta_star;
  double sigma = 1.0;
  std::vector<CellSpec> cells;
  int n_data = 1, n_init = 2;
  bool want_diversity = true;
  bool want_sharp = false;
  SharpnessMethod method = SharpnessMethod::TrustRegion;
  double rho0 = 0.0;
};

struct SweepStats {
  // [cell][draw]
  std::vector<std::vector<double>> diversity;
  std::vector<std::vector<double>> sharp;
};

// per-row population variance across columns, averaged over rows
double column_population_variance_mean(const DenseMatrix& P) {
  DenseVector mean = P.rowwise().mean();
  DenseVector mean_sq = P.cwiseProduct(P).rowwise().mean();
  return (mean_sq - mean.cwiseProduct(mean)).mean();
}

SweepStats run_sweep(const SweepRequest& req, RngStream rng, int n_workers) {
  const std::size_t n_cells = req.cells.size();
  SweepStats stats;
  stats.diversity.assign(n_cells, std::vector<double>(static_cast<std::size_t>(req.n_data), 0.0));
  stats.sharp.assign(n_cells, std::vector<double>(static_cast<std::size_t>(req.n_data), 0.0));

  const double entry_var = 1.0 / static_cast<double>(req.d_in);
  const Index sub_rows = req.n_tr / req.S;

  parallel_for(req.n_data, n_workers, [&](int draw) {
    RngStream ds = rng.child(static_cast<std::uint64_t>(draw) + 1);
    DenseMatrix A = gaussian_matrix(ds, req.n_tr, req.d_in, entry_var);
    DenseMatrix T = gaussian_matrix(ds, req.n_te, req.d_in, entry_var);

    const bool need_full = req.S == 1 || req.want_sharp;
    SymEigen full;
    DenseMatrix TV;          // T * V (S == 1 diversity path)
    DenseVector z_star_full; // V^T theta*
    if (need_full) {
      full = sym_eigen(gram(A));
      z_star_full = full.vectors.transpose() * req.theta_star;
      if (req.S == 1 && req.want_diversity) TV = T * full.vectors;
    }
    std::vector<SymEigen> subs;
    std::vector<DenseVector> z_star_sub;
    std::vector<DenseMatrix> TVs;
    if (req.S > 1) {
      subs.reserve(static_cast<std::size_t>(req.S));
      for (int s = 0; s < req.S; ++s) {
        subs.push_back(sym_eigen(gram(A.middleRows(static_cast<Index>(s) * sub_rows, sub_rows))));
        z_star_sub.push_back(subs.back().vectors.transpose() * req.theta_star);
        if (req.want_diversity) TVs.push_back(T * subs.back().vectors);
      }
    }

    // init draws, rotated once per draw and reused by every cell
    DenseMatrix Y0;                  // V^T theta0 (S==1) or V_s^T (theta0 - theta*) (S>1)
    std::vector<int> subset_choice;
    std::vector<std::vector<int>> by_subset(static_cast<std::size_t>(req.S));
    if (req.want_diversity) {
      DenseMatrix Theta0 = req.sigma > 0.0
                               ? gaussian_matrix(ds, req.d_in, req.n_init, req.sigma * req.sigma)
                               : DenseMatrix::Zero(req.d_in, req.n_init);
      if (req.S == 1) {
        Y0 = full.vectors.transpose() * Theta0;
      } else {
        subset_choice.resize(static_cast<std::size_t>(req.n_init));
        Y0.resize(req.d_in, req.n_init);
        for (int i = 0; i < req.n_init; ++i) {
          int s = static_cast<int>(ds.next_below(static_cast<std::uint64_t>(req.S)));
          subset_choice[static_cast<std::size_t>(i)] = s;
          by_subset[static_cast<std::size_t>(s)].push_back(i);
          Y0.col(i) = subs[static_cast<std::size_t>(s)].vectors.transpose() *
                      (Theta0.col(i) - req.theta_star);
        }
      }
    }

    for (std::size_t ci = 0; ci < n_cells; ++ci) {
      const CellSpec& cell = req.cells[ci];
      if (req.want_diversity) {
        DenseMatrix P(req.n_te, req.n_init);
        if (req.S == 1) {
          DenseVector bk = beta_pow(full.values, cell.eta, cell.rho, cell.k);
          P.noalias() = TV * bk.asDiagonal() * Y0;
        } else {
          for (int s = 0; s < req.S; ++s) {
            const auto& idx = by_subset[static_cast<std::size_t>(s)];
            if (idx.empty()) continue;
            DenseVector bk = beta_pow(subs[static_cast<std::size_t>(s)].values, cell.eta, cell.rho, cell.k);
            for (int i : idx)
              P.col(i).noalias() = TVs[static_cast<std::size_t>(s)] * bk.cwiseProduct(Y0.col(i));
          }
        }
        stats.diversity[ci][static_cast<std::size_t>(draw)] = column_population_variance_mean(P);
      }
      if (req.want_sharp) {
        DenseVector c;
        if (req.S == 1) {
          DenseVector bk = beta_pow(full.values, cell.eta, cell.rho, cell.k);
          c = full.values.cwiseProduct(bk).cwiseProduct(z_star_full);
        } else {
          DenseVector u = DenseVector::Zero(req.d_in);
          for (int s = 0; s < req.S; ++s) {
            DenseVector bk = beta_pow(subs[static_cast<std::size_t>(s)].values, cell.eta, cell.rho, cell.k);
            u += subs[static_cast<std::size_t>(s)].vectors *
                 bk.cwiseProduct(z_star_sub[static_cast<std::size_t>(s)]);
          }
          u /= static_cast<double>(req.S);
          c = full.values.cwiseProduct(full.vectors.transpose() * u);
        }
        stats.sharp[ci][static_cast<std::size_t>(draw)] =
            req.method == SharpnessMethod::TrustRegion
                ? ball_max_core(full.values, c, req.rho0)
                : ball_max_pga_core(full.values, c, req.rho0, 50, 0.01, nullptr);
      }
    }
  });
  return stats;
}

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

MeanSe summarize(const std::vector<double>& xs) {
  MeanSe r;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) r.mean += x;
  r.mean /= n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

}  // namespace

double quad_loss(const DenseVector& theta, const QuadProblem& problem, DataSelector sel) {
  if (theta.size() != problem.d_in()) throw std::invalid_argument("quad_loss: theta dim mismatch");
  DenseMatrix M = gram(select_rows(problem, sel));
  DenseVector d = theta - problem.theta_star;
  return 0.5 * d.dot(M * d);
}

DenseVector sam_step(const DenseVector& theta, const QuadProblem& problem, DataSelector sel) {
  if (theta.size() != problem.d_in()) throw std::invalid_argument("sam_step: theta dim mismatch");
  DenseMatrix M = gram(select_rows(problem, sel));
  DenseVector g = M * (theta - problem.theta_star);
  DenseVector g2 = M * (theta + problem.rho * g - problem.theta_star);
  return theta - problem.eta * g2;
}

DenseVector closed_form_theta(const QuadProblem& problem, const DenseVector& theta0, int steps,
                              DataSelector sel) {
  if (steps < 0) throw std::invalid_argument("closed_form_theta: steps must be >= 0");
  if (theta0.size() != problem.d_in())
    throw std::invalid_argument("closed_form_theta: theta0 dim mismatch");
  SymEigen eig = sym_eigen(gram(select_rows(problem, sel)));
  DenseVector bk = beta_pow(eig.values, problem.eta, problem.rho, steps);
  return problem.theta_star +
         eig.vectors * bk.cwiseProduct(eig.vectors.transpose() * (theta0 - problem.theta_star));
}

double contraction_margin(const QuadProblem& problem) {
  SymEigen eig = sym_eigen(gram(problem.A));
  const double lmax = eig.values[0];
  return problem.eta * (lmax + problem.rho * lmax * lmax);
}

double max_quadratic_on_ball(const SymEigen& eig, const DenseVector& b, double rho0) {
  if (rho0 < 0.0) throw std::invalid_argument("max_quadratic_on_ball: rho0 must be >= 0");
  return ball_max_core(eig.values, eig.vectors.transpose() * b, rho0);
}

double max_quadratic_on_ball_pga(const SymEigen& eig, const DenseVector& b, double rho0, int steps,
                                 double step_size) {
  if (rho0 < 0.0) throw std::invalid_argument("max_quadratic_on_ball_pga: rho0 must be >= 0");
  return ball_max_pga_core(eig.values, eig.vectors.transpose() * b, rho0, steps, step_size, nullptr);
}

SimEstimate mc_diversity(const QuadProblem& problem, int n_data, int n_init, RngStream rng,
                         int n_workers) {
  problem.validate();
  if (n_data < 2 || n_init < 2)
    throw std::invalid_argument("mc_diversity: need n_data >= 2 and n_init >= 2");
  SweepRequest req;
  req.n_tr = problem.n_tr();
  req.d_in = problem.d_in();
  req.n_te = problem.n_te();
  req.S = problem.S;
  req.theta_star = problem.theta_star;
  req.sigma = problem.sigma;
  req.cells = {{problem.k, problem.eta, problem.rho}};
  req.n_data = n_data;
  req.n_init = n_init;
  req.want_diversity = true;
  req.want_sharp = false;
  SweepStats st = run_sweep(req, rng, n_workers);
  MeanSe ms = summarize(st.diversity[0]);
  SimEstimate est;
  est.diversity_mc = ms.mean;
  est.diversity_se = ms.se;
  est.n_data_draws = n_data;
  est.n_init_draws = n_init;
  return est;
}

SimEstimate mc_sharpness(const QuadProblem& problem, double rho0, int n_data,
                         SharpnessMethod method, RngStream rng, int n_workers) {
  problem.validate();
  if (!(rho0 >= 0.0)) throw std::invalid_argument("mc_sharpness: rho0 must be >= 0");
  if (n_data < 1) throw std::invalid_argument("mc_sharpness: need n_data >= 1");
  SweepRequest req;
  req.n_tr = problem.n_tr();
  req.d_in = problem.d_in();
  req.n_te = problem.n_te();
  req.S = problem.S;
  req.theta_star = problem.theta_star;
  req.sigma = problem.sigma;
  req.cells = {{problem.k, problem.eta, problem.rho}};
  req.n_data = n_data;
  req.n_init = 0;
  req.want_diversity = false;
  req.want_sharp = true;
  req.method = method;
  req.rho0 = rho0;
  SweepStats st = run_sweep(req, rng, n_workers);
  MeanSe ms = summarize(st.sharp[0]);
  SimEstimate est;
  est.sharpness_mc = ms.mean;
  est.sharpness_se = ms.se;
  est.n_data_draws = n_data;
  return est;
}

std::vector<VerifyRow> verify_theorems(const VerifySweep& sweep, RngStream rng, int n_workers) {
  if (sweep.k_grid.empty() || sweep.eta_grid.empty() || sweep.rho_grid.empty())
    throw std::invalid_argument("verify_theorems: empty grid");
  if (sweep.n_data < 2 || sweep.n_init < 2)
    throw std::invalid_argument("verify_theorems: need n_data >= 2 and n_init >= 2");

  RngStream star_rng = rng.child(0);
  DenseVector theta_star = gaussian_vector(star_rng, sweep.d_in, 1.0);
  theta_star *= sweep.theta_star_norm / theta_star.norm();

  SweepRequest req;
  req.n_tr = sweep.n_tr;
  req.d_in = sweep.d_in;
  req.n_te = sweep.n_te;
  req.S = static_cast<int>(sweep.S);
  req.theta_star = theta_star;
  req.sigma = sweep.sigma;
  req.n_data = sweep.n_data;
  req.n_init = sweep.n_init;
  req.want_diversity = true;
  req.want_sharp = true;
  req.method = sweep.method;
  req.rho0 = sweep.rho0;
  for (int k : sweep.k_grid)
    for (double eta : sweep.eta_grid)
      for (double rho : sweep.rho_grid) req.cells.push_back({k, eta, rho});

  SweepStats st = run_sweep(req, rng, n_workers);

  const TrainVariant variant = sweep.S > 1 ? TrainVariant::SharpBalance : TrainVariant::Sam;
  std::vector<VerifyRow> rows;
  rows.reserve(req.cells.size());
  for (std::size_t ci = 0; ci < req.cells.size(); ++ci) {
    const CellSpec& cell = req.cells[ci];
    VerifyRow row;
    row.variant = variant;
    row.k = cell.k;
    row.eta = cell.eta;
    row.rho = cell.rho;
    MeanSe d = summarize(st.diversity[ci]);
    MeanSe s = summarize(st.sharp[ci]);
    row.diversity_mc = d.mean;
    row.diversity_se = d.se;
    row.sharp_mc = s.mean;
    row.sharp_se = s.se;

    TheoryConfig tc;
    tc.params = PhiParams{sweep.n_tr, sweep.d_in, cell.eta, cell.rho, sweep.S};
    tc.sigma = sweep.sigma;
    tc.theta_star_norm = sweep.theta_star_norm;
    tc.rho0 = sweep.rho0;
    tc.k = cell.k;
    try {
      if (sweep.require_contraction) {
        const double q = tc.params.subset_ratio();
        const double edge = (std::sqrt(q) + 1.0) * (std::sqrt(q) + 1.0);
        const double margin = cell.eta * (edge + cell.rho * edge * edge);
        if (margin >= 2.0) {
          std::ostringstream os;
          os << "contraction violated: eta (lambda_max + rho lambda_max^2) = " << margin << " >= 2";
          throw std::runtime_error(os.str());
        }
      }
      if (variant == TrainVariant::Sam) {
        row.diversity_theory = sam_diversity(tc);
        SharpnessBounds b = sam_sharpness_bounds(tc);
        row.sharp_lower = b.lower;
        row.sharp_upper = b.upper;
        row.sharpness_pass = row.sharp_mc >= row.sharp_lower - 2.0 * row.sharp_se &&
                             row.sharp_mc <= row.sharp_upper + 2.0 * row.sharp_se;
      } else {
        row.diversity_theory = sharpbal_diversity(tc);
        row.sharp_upper = sharpbal_sharpness_upper(tc);
        row.sharp_lower = std::numeric_limits<double>::quiet_NaN();
        row.sharpness_pass = row.sharp_mc <= row.sharp_upper + 2.0 * row.sharp_se;
      }
      row.diversity_pass =
          std::abs(row.diversity_mc - row.diversity_theory) <=
          sweep.div_rel_tol * std::abs(row.diversity_theory);
      row.pass = row.diversity_pass && row.sharpness_pass;
    } catch (const std::exception& e) {
      row.error = e.what();
      row.pass = false;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace flatdiv

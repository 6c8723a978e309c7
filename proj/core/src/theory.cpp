#include "flatdiv/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flatdiv {

const char* to_string(TrainVariant v) {
  return v == TrainVariant::Sam ? "sam" : "sharpbalance";
}

namespace {

PhiParams full_data_params(const TheoryConfig& cfg) {
  PhiParams p = cfg.params;
  p.S = 1;
  return p;
}

}  // namespace

double sam_diversity(const TheoryConfig& cfg) {
  return phi(full_data_params(cfg), 2 * cfg.k, 0) * cfg.sigma * cfg.sigma;
}

SharpnessBounds sam_sharpness_bounds(const TheoryConfig& cfg) {
  const PhiParams p = full_data_params(cfg);
  const double p22 = phi(p, 2 * cfg.k, 2);
  if (!(p22 > 0.0))
    throw std::runtime_error("sam_sharpness_bounds: Jensen-gap constant undefined (phi(2k,2) <= 0)");
  const double p44 = phi(p, 4 * cfg.k, 4);
  const double tsn = cfg.theta_star_norm;
  const double G = (p44 - p22 * p22) / (2.0 * std::pow(p22, 1.5) * tsn);
  const double ratio = std::sqrt(static_cast<double>(cfg.params.n_tr) / static_cast<double>(cfg.params.d_in));
  const double half_r2 = 0.5 * cfg.rho0 * cfg.rho0;
  const double align = cfg.rho0 * std::sqrt(p22) * tsn;
  SharpnessBounds b;
  b.lower = half_r2 * (ratio - 1.0) * (ratio - 1.0) + align - G;
  b.upper = half_r2 * (ratio + 1.0) * (ratio + 1.0) + align;
  return b;
}

double sharpbal_diversity(const TheoryConfig& cfg) {
  const double p2k0 = phi(cfg.params, 2 * cfg.k, 0);
  if (cfg.params.S == 1) return p2k0 * cfg.sigma * cfg.sigma;
  const double pk0 = phi(cfg.params, cfg.k, 0);
  const double S = static_cast<double>(cfg.params.S);
  const double subset_var = (S - 1.0) / (static_cast<double>(cfg.params.d_in) * S) *
                            (p2k0 - pk0 * pk0) * cfg.theta_star_norm * cfg.theta_star_norm;
  return p2k0 * cfg.sigma * cfg.sigma + subset_var;
}

double sharpbal_sharpness_upper(const TheoryConfig& cfg) {
  const PhiParams& p = cfg.params;
  const double S = static_cast<double>(p.S);
  const double r = p.subset_ratio();
  const double p2k2 = phi(p, 2 * cfg.k, 2);
  const double p2k1 = phi(p, 2 * cfg.k, 1);
  const double p2k0 = phi(p, 2 * cfg.k, 0);
  const double pk2 = phi(p, cfg.k, 2);
  const double pk1 = phi(p, cfg.k, 1);
  const double pk0 = phi(p, cfg.k, 0);
  const double C = S * p2k2
      + 2.0 * r * S * (S - 1.0) * p2k1
      + 2.0 * S * (S - 1.0) * pk2 * pk0
      + r * (1.0 + r) * S * (S - 1.0) * p2k0
      + 2.0 * S * (S - 1.0) * pk1 * pk1
      + 1.5 * r * (1.0 + r) * S * (S - 1.0) * (S - 2.0) * pk0 * pk0
      + 1.5 * r * r * S * (S - 1.0) * (S - 2.0) * p2k0
      + 3.0 * r * S * (S - 1.0) * (S - 2.0) * pk0 * pk1
      + r * r * S * (S - 1.0) * (S - 2.0) * (S - 3.0) * pk0 * pk0;
  if (C < 0.0)
    throw std::runtime_error("sharpbal_sharpness_upper: negative bound constant");
  const double ratio = std::sqrt(static_cast<double>(p.n_tr) / static_cast<double>(p.d_in));
  return 0.5 * cfg.rho0 * cfg.rho0 * (ratio + 1.0) * (ratio + 1.0) +
         cfg.rho0 / S * std::sqrt(C) * cfg.theta_star_norm;
}

std::vector<TheoryPoint> tradeoff_curve(const TheoryConfig& base, std::span<const double> rho_grid,
                                        TrainVariant variant) {
  if (rho_grid.empty()) throw std::invalid_argument("tradeoff_curve: empty rho grid");
  std::vector<TheoryPoint> out;
  out.reserve(rho_grid.size());
  for (double rho : rho_grid) {
    TheoryPoint pt;
    pt.variant = variant;
    pt.rho = rho;
    pt.k = base.k;
    TheoryConfig cfg = base;
    cfg.params.rho = rho;
    try {
      if (variant == TrainVariant::Sam) {
        pt.diversity = sam_diversity(cfg);
        SharpnessBounds b = sam_sharpness_bounds(cfg);
        pt.sharp_lower = b.lower;
        pt.sharp_upper = b.upper;
      } else {
        pt.diversity = sharpbal_diversity(cfg);
        pt.sharp_upper = sharpbal_sharpness_upper(cfg);
      }
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
    out.push_back(std::move(pt));
  }
  return out;
}

namespace {

struct XY {
  double x, y;
};

std::vector<XY> curve_points(const std::vector<TheoryPoint>& curve) {
  std::vector<XY> pts;
  for (const auto& p : curve)
    if (p.error.empty() && p.sharp_upper && p.diversity)
      pts.push_back({*p.sharp_upper, *p.diversity});
  std::sort(pts.begin(), pts.end(), [](const XY& a, const XY& b) { return a.x < b.x; });
  return pts;
}

double interp(const std::vector<XY>& pts, double x) {
  if (x <= pts.front().x) return pts.front().y;
  if (x >= pts.back().x) return pts.back().y;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (x <= pts[i].x) {
      double span = pts[i].x - pts[i - 1].x;
      if (span <= 0.0) return pts[i].y;
      double t = (x - pts[i - 1].x) / span;
      return pts[i - 1].y + t * (pts[i].y - pts[i - 1].y);
    }
  }
  return pts.back().y;
}

}  // namespace

DominanceResult check_dominance(const std::vector<TheoryPoint>& sam_curve,
                                const std::vector<TheoryPoint>& sharpbal_curve) {
  DominanceResult res;
  auto sam = curve_points(sam_curve);
  auto sb = curve_points(sharpbal_curve);
  if (sam.size() < 2 || sb.size() < 2) return res;
  const double lo = std::max(sam.front().x, sb.front().x);
  const double hi = std::min(sam.back().x, sb.back().x);
  if (!(lo < hi)) return res;
  res.has_overlap = true;

  std::vector<double> xs;
  for (const auto& p : sam)
    if (p.x >= lo && p.x <= hi) xs.push_back(p.x);
  for (const auto& p : sb)
    if (p.x >= lo && p.x <= hi) xs.push_back(p.x);
  xs.push_back(lo);
  xs.push_back(hi);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  res.dominates = true;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d_sam = interp(sam, xs[i]);
    const double d_sb = interp(sb, xs[i]);
    const double tol = 1e-12 * std::max({1.0, std::abs(d_sam), std::abs(d_sb)});
    if (d_sb < d_sam - tol) res.dominates = false;
    if (i > 0 && i + 1 < xs.size() && d_sb > d_sam + tol) res.strict_interior = true;
  }
  return res;
}

}  // namespace flatdiv

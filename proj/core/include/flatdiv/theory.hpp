#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flatdiv/wishart.hpp"

namespace flatdiv {

enum class TrainVariant { Sam, SharpBalance };

const char* to_string(TrainVariant v);

struct TheoryConfig {
  PhiParams params;             // params.rho is the SAM training radius
  double sigma = 1.0;           // init scale
  double theta_star_norm = 1.0; // ||theta*||_2
  double rho0 = 0.05;           // sharpness-measurement radius
  int k = 1;                    // training iterations
};

struct SharpnessBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// One point of an analytic trade-off curve. sharp_lower is absent for the
/// SharpBalance variant (the theorem gives no lower bound); a nonempty error
/// marks a point whose evaluation failed.
struct TheoryPoint {
  TrainVariant variant = TrainVariant::Sam;
  double rho = 0.0;
  int k = 0;
  std::optional<double> diversity;
  std::optional<double> sharp_lower;
  std::optional<double> sharp_upper;
  std::string error;
};

/// D(theta_k^SAM) = phi(2k,0) sigma^2.
double sam_diversity(const TheoryConfig& cfg);

/// Lower/upper bounds on the expected sharpness kappa_k^SAM at radius rho0.
/// Throws if phi(2k,2) <= 0 (Jensen-gap constant undefined).
SharpnessBounds sam_sharpness_bounds(const TheoryConfig& cfg);

/// D(theta_k^SharpBal) = phi'(2k,0) sigma^2
///   + (S-1)/(d_in S) (phi'(2k,0) - phi'(k,0)^2) ||theta*||^2.
/// Reduces bitwise to sam_diversity at S = 1.
double sharpbal_diversity(const TheoryConfig& cfg);

/// Upper bound on kappa_k^SharpBal at radius rho0 (nine-term constant C).
/// Throws if C < 0.
double sharpbal_sharpness_upper(const TheoryConfig& cfg);

/// Evaluates one TheoryPoint per rho in the grid; per-point failures are
/// recorded in TheoryPoint::error instead of aborting the curve.
std::vector<TheoryPoint> tradeoff_curve(const TheoryConfig& base, std::span<const double> rho_grid,
                                        TrainVariant variant);

struct DominanceResult {
  bool has_overlap = false;     // the curves share a sharpness-upper interval
  bool dominates = false;       // sb diversity >= sam diversity on the overlap
  bool strict_interior = false; // strictly greater at >= 1 interior abscissa
};

/// Compares two curves in (sharp_upper, diversity) space by piecewise-linear
/// interpolation: does the SharpBalance curve dominate the SAM curve at every
/// matched sharpness-upper value?
DominanceResult check_dominance(const std::vector<TheoryPoint>& sam_curve,
                                const std::vector<TheoryPoint>& sharpbal_curve);

}  // namespace flatdiv

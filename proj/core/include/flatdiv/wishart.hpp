#pragma once

#include <cstdint>

namespace flatdiv {

/// Parameters of the moment functional phi(i,j). With S = 1 this is the
/// full-data functional of the SAM analysis; with S > 1 every occurrence of
/// n_tr is replaced by n_tr/S, giving the subset-trained functional phi'.
struct PhiParams {
  std::int64_t n_tr = 0;
  std::int64_t d_in = 0;
  double eta = 0.0;
  double rho = 0.0;
  std::int64_t S = 1;

  /// q = n_tr / (S * d_in), the rows-per-dimension ratio of one partition.
  double subset_ratio() const { return static_cast<double>(n_tr) / (static_cast<double>(S) * static_cast<double>(d_in)); }

  /// Throws std::invalid_argument on violated invariants
  /// (positivity, n_tr >= d_in, S | n_tr).
  void validate() const;
};

/// Enumeration cap for phi's multinomial sum (the theory needs i <= 4k).
inline constexpr int kPhiMaxI = 64;

/// Narayana number N_{m,l} = (1/l) C(m-1,l-1) C(m,l-1). Exact integer
/// arithmetic for m <= 30, log-space beyond. Throws for l outside [1, m].
double narayana(int m, int l);

/// Scalar c_k with E[(A^T A)^k] = c_k I at leading order in 1/d_in:
/// c_0 = 1 and c_k = sum_{i=1..k} q^i N_{k,i} for k >= 1.
double wishart_moment(const PhiParams& params, int k);

/// phi(i,j): E[B^i (A^T A)^j] = phi(i,j) I for B = I - eta A^T A - eta rho (A^T A)^2,
/// at leading order. Terms are summed by ascending magnitude to tame the
/// alternating (-eta)^(k2+k3) cancellation. Throws if i > kPhiMaxI.
double phi(const PhiParams& params, int i, int j);

}  // namespace flatdiv

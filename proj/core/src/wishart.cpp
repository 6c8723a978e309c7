#include "flatdiv/wishart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace flatdiv {
namespace {

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

std::uint64_t binom_u64(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  }
  return r;
}

double kahan_sum_ascending(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end(),
            [](double a, double b) { return std::abs(a) < std::abs(b); });
  double sum = 0.0, comp = 0.0;
  for (double t : terms) {
    double y = t - comp;
    double u = sum + y;
    comp = (u - sum) - y;
    sum = u;
  }
  return sum;
}

}  // namespace

void PhiParams::validate() const {
  if (n_tr < 1 || d_in < 1) throw std::invalid_argument("PhiParams: n_tr and d_in must be positive");
  if (eta < 0.0) throw std::invalid_argument("PhiParams: eta must be nonnegative");
  if (rho < 0.0) throw std::invalid_argument("PhiParams: rho must be nonnegative");
  if (S < 1) throw std::invalid_argument("PhiParams: S must be >= 1");
  if (n_tr < d_in) throw std::invalid_argument("PhiParams: requires n_tr >= d_in");
  if (n_tr % S != 0) throw std::invalid_argument("PhiParams: n_tr must be divisible by S");
}

double narayana(int m, int l) {
  if (m < 1 || l < 1 || l > m)
    throw std::invalid_argument("narayana: need 1 <= l <= m, got m=" + std::to_string(m) +
                                " l=" + std::to_string(l));
  if (m <= 30) {
    // all values <= Catalan(30) < 2^53, exact in double
    std::uint64_t v = binom_u64(m - 1, l - 1) * binom_u64(m, l - 1) / static_cast<std::uint64_t>(l);
    return static_cast<double>(v);
  }
  auto log_binom = [](int n, int k) {
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
  };
  return std::exp(log_binom(m - 1, l - 1) + log_binom(m, l - 1) - std::log(static_cast<double>(l)));
}

double wishart_moment(const PhiParams& params, int k) {
  if (k < 0) throw std::invalid_argument("wishart_moment: k must be >= 0");
  if (k == 0) return 1.0;
  const double q = params.subset_ratio();
  // positive terms, ascending magnitude for q >= 1
  double sum = 0.0;
  double qi = 1.0;
  for (int i = 1; i <= k; ++i) {
    qi *= q;
    sum += qi * narayana(k, i);
  }
  return sum;
}

double phi(const PhiParams& params, int i, int j) {
  if (i < 0 || j < 0) throw std::invalid_argument("phi: i and j must be >= 0");
  if (i > kPhiMaxI)
    throw std::invalid_argument("phi: i=" + std::to_string(i) + " exceeds enumeration cap " +
                                std::to_string(kPhiMaxI));
  // moments for every m this enumeration can reach
  const int max_m = 2 * i + j;
  std::vector<double> wm(static_cast<std::size_t>(max_m) + 1);
  for (int m = 0; m <= max_m; ++m) wm[static_cast<std::size_t>(m)] = wishart_moment(params, m);

  const double log_eta = params.eta > 0.0 ? std::log(params.eta) : 0.0;
  const double log_rho = params.rho > 0.0 ? std::log(params.rho) : 0.0;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(i + 1) * static_cast<std::size_t>(i + 2) / 2);
  for (int k2 = 0; k2 <= i; ++k2) {
    for (int k3 = 0; k3 + k2 <= i; ++k3) {
      const int k1 = i - k2 - k3;
      const int m = k2 + 2 * k3 + j;
      if (m == 0) continue;  // identity term, carried by the j == 0 indicator
      if (params.eta == 0.0 && k2 + k3 > 0) continue;
      if (params.rho == 0.0 && k3 > 0) continue;
      const double log_mult =
          log_factorial(i) - log_factorial(k1) - log_factorial(k2) - log_factorial(k3);
      const double mag =
          std::exp(log_mult + (k2 + k3) * log_eta + k3 * log_rho) * wm[static_cast<std::size_t>(m)];
      terms.push_back((k2 + k3) % 2 == 0 ? mag : -mag);
    }
  }
  const double indicator = (j == 0) ? 1.0 : 0.0;
  return indicator + kahan_sum_ascending(terms);
}

}  // namespace flatdiv

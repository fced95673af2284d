#pragma once

#include <string>
#include <vector>

#include "nfisac/config.hpp"
#include "nfisac/geometry.hpp"

namespace nfisac {

/// N_t x (K+1) matrix: column 0 is the common-stream precoder p_0, column
/// k is the private precoder of user k. Covariance R = P P^H.
using Precoder = CMat;

/// Split C_{c,k} of the common rate between users (bits/s/Hz).
struct CommonRateAlloc {
  std::vector<double> shares;

  static CommonRateAlloc zeros(std::size_t k) { return {std::vector<double>(k, 0.0)}; }
  double sum() const;
};

/// One unit-norm receive filter per target.
struct ReceiveFilters {
  std::vector<CVec> filters;
};

/// Received power split at one user.
///
///   S_c = |h^H p_0|^2,  S_p = |h^H p_k|^2,
///   I_p = sum_{j != k} |h^H p_j|^2 + sigma^2 + alpha S_c,
///   T_p = S_p + I_p,  I_c = T_p without the alpha S_c term,  T_c = S_c + I_c.
struct PowerTerms {
  double total_common = 0.0;
  double signal_common = 0.0;
  double interference_common = 0.0;
  double total_private = 0.0;
  double signal_private = 0.0;
  double interference_private = 0.0;
};

/// `user` is zero-based; its private stream is column user + 1 of P.
PowerTerms power_terms(const Precoder& p, const CVec& h, std::size_t user, double noise_mw,
                       double sic_residual);

struct RateReport {
  std::vector<double> common_rates;   // R_{c,k}
  double common_rate = 0.0;           // R_c = min_k R_{c,k}
  std::vector<double> private_rates;  // R_{p,k}
  std::vector<double> shares;         // C_{c,k}
  std::vector<double> totals;         // R_k = C_{c,k} + R_{p,k}
  double min_total = 0.0;
  std::vector<double> sensing_sinrs;
  std::vector<double> sensing_rates;
  double objective = 0.0;  // max-min objective R_s
  bool common_violation = false;
  double power_mw = 0.0;
};

inline constexpr double kCommonRateTol = 1e-9;

double log2p1(double x);

/// Communication fields of the report; flags (does not throw) when the
/// common-rate split exceeds R_c by more than kCommonRateTol.
RateReport comm_rates(const Precoder& p, const CommonRateAlloc& alloc, const Scenario& scenario,
                      const SystemConfig& cfg);

std::vector<double> sensing_sinr(const Precoder& p, const ReceiveFilters& u,
                                 const Scenario& scenario, const SystemConfig& cfg);

/// Sensing SINRs from an arbitrary transmit covariance R (N_t x N_t).
std::vector<double> sensing_sinr_cov(const CMat& covariance, const ReceiveFilters& u,
                                     const Scenario& scenario, const SystemConfig& cfg);

/// Full report: communication fields, sensing fields, objective = min_total.
RateReport evaluate(const Precoder& p, const CommonRateAlloc& alloc, const ReceiveFilters& u,
                    const Scenario& scenario, const SystemConfig& cfg);

/// Common-rate split maximizing min_k (C_k + R_{p,k}) subject to
/// sum C_k <= common_rate and C_k >= 0 (water-filling on the weakest users).
CommonRateAlloc optimal_common_split(double common_rate, const std::vector<double>& private_rates);

/// Column order of rate_report_csv_row; per-user and per-target blocks are
/// expanded for the given K and M.
std::string rate_report_csv_header(std::size_t n_users, std::size_t n_targets);
std::string rate_report_csv_row(const RateReport& r);

}  // namespace nfisac

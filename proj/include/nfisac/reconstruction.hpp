#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nfisac/config.hpp"
#include "nfisac/geometry.hpp"
#include "nfisac/rates.hpp"

namespace nfisac {

/// Covariance-domain solution with an explicit dedicated sensing covariance.
/// comm_covs[0] is the common stream; all blocks are N_f x N_f.
struct CovarianceSolution {
  std::vector<CMat> comm_covs;
  CMat sense_cov;
  CMat analog;

  /// sum_k W_k + V (N_f x N_f).
  CMat digital_total() const;
  /// F (sum_k W_k + V) F^H.
  CMat transmit_covariance() const;
  /// sum_k Tr(F^H F W_k) + Tr(F^H F V).
  double transmit_power() const;
};

/// Common / private SINRs of every user from covariances (V counts as interference).
struct CovarianceSinrs {
  std::vector<double> common;
  std::vector<double> priv;
};

CovarianceSinrs covariance_sinrs(const CovarianceSolution& sol, const Scenario& scenario,
                                 const SystemConfig& cfg);

/// Uniform 1 / (K+1).
std::vector<double> uniform_merge_weights(std::size_t n_streams);

/// W_k += delta_k V, V = 0. Throws std::invalid_argument unless delta_k >= 0
/// and sum delta_k = 1 within 1e-12.
CovarianceSolution merge_sensing(const CovarianceSolution& sol, const std::vector<double>& weights);

struct RankReduceResult {
  CMat matrix;
  std::size_t rank = 0;
  bool irreducible = false;
  std::vector<std::size_t> rank_history;  // rank before each step, then final
  std::vector<double> min_eigenvalues;    // after each step
};

/// Numerical rank with eigenvalues below 1e-10 * largest treated as zero.
std::size_t psd_rank(const CMat& w);

/// Lowers the rank of a PSD matrix to one while keeping Tr(B_i W) fixed for
/// every supplied Hermitian functional. Stops with irreducible = true if the
/// homogeneous system admits only X = 0. When `nonincreasing` is given, the
/// sign of each step is chosen so Tr(B W) does not grow.
RankReduceResult rank_reduce(const CMat& w, const std::vector<CMat>& functionals,
                             const CMat* nonincreasing = nullptr);

/// Functionals that pin every user SINR, every sensing SINR for filters u,
/// and the transmit power of a block: h~_j h~_j^H, F^H G_a^H u_b u_b^H G_a F
/// for all (a, b), and F^H F.
std::vector<CMat> reconstruction_functionals(const CMat& analog, const ReceiveFilters& u,
                                             const Scenario& scenario);

struct VerificationReport {
  std::string status;  // identical | reduced | irreducible
  bool passed = false;
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::vector<double> sensing_rates_before;
  std::vector<double> sensing_rates_after;
  std::vector<double> common_sinr_before, common_sinr_after;
  std::vector<double> private_sinr_before, private_sinr_after;
  double covariance_error = 0.0;   // max |R_merged - R_original| / max |R_original|
  double power_before = 0.0;
  double power_after = 0.0;
  std::vector<std::size_t> ranks;  // per stream after reduction
  double min_eigenvalue = 0.0;
  CovarianceSolution merged;       // after merge, before rank reduction
  CovarianceSolution reduced;
};

/// Merge then per-stream rank reduction, re-evaluated against the original.
/// Throws std::invalid_argument if `sol` violates power or PSD-ness.
VerificationReport verify_no_sensing_beams(const CovarianceSolution& sol, const Scenario& scenario,
                                           const SystemConfig& cfg,
                                           const std::optional<std::vector<double>>& weights = {});

/// Covariance view of a hybrid point: W_k = w_k w_k^H, V given.
CovarianceSolution covariance_from_hybrid(const CMat& analog, const CMat& digital,
                                          const CMat& sense_cov);

}  // namespace nfisac

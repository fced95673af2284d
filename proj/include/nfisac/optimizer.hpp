#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nfisac/config.hpp"
#include "nfisac/geometry.hpp"
#include "nfisac/qcqp.hpp"
#include "nfisac/rates.hpp"

namespace nfisac {

/// tau = 1/ln 2 + log2(ln 2): the WMSE value at zero rate.
double wmmse_tau();

/// F (N_t x N_f, unit modulus) and W (N_f x (K+1)).
struct HybridBeamformer {
  CMat analog;
  CMat digital;

  Precoder product() const { return analog * digital; }
};

struct Equalizers {
  std::vector<cplx> common;
  std::vector<cplx> priv;
  std::vector<double> mmse_common;
  std::vector<double> mmse_private;
};

struct Weights {
  std::vector<double> common;
  std::vector<double> priv;
};

/// Closed-form auxiliary block of the inner loop.
struct AuxVars {
  Equalizers equalizers;
  Weights weights;
  std::vector<CVec> qt_vectors;  // x_m, length K+1
};

/// Outer-loop state of the penalty dual decomposition.
struct PddState {
  CMat dual;
  double penalty = 1.0;
  double residual_gate = 1.0;
  double shrink = 0.8;
  int outer_iter = 0;
};

enum class StreamMode { kRsma, kSdma };

struct OptimizerOptions {
  StreamMode mode = StreamMode::kRsma;
  double inner_tol = 1e-3;
  int inner_max = 100;
  int outer_max = 60;
  double outer_residual_tol = 1e-4;
  double outer_objective_tol = 1e-3;
  double initial_penalty = 1.0;
  double shrink = 0.8;
  double init_power_fraction = 0.9;
  /// Fixed-F digital refinement sweeps applied to the delivered hybrid point.
  int polish_max = 20;
  double polish_tol = 1e-4;
  int restoration_max = 30;
  std::uint64_t seed = 1;
  qcqp::Options solver;
};

// ----- closed-form block updates -------------------------------------------

/// Generalized-eigenvector radar receive filters, unit norm, with the global
/// phase fixed so the largest-magnitude entry is real and positive.
ReceiveFilters update_receive_filters(const Precoder& p, const Scenario& scenario,
                                      const SystemConfig& cfg);

Equalizers update_equalizers(const Precoder& p, const Scenario& scenario, const SystemConfig& cfg);

/// MSE of one stream for an arbitrary equalizer: |w|^2 T - 2 Re(w h^H p) + 1.
double stream_mse(cplx equalizer, double total_power, cplx channel_gain);

/// eta = 1 / (delta ln 2). Throws std::domain_error for delta <= 0.
Weights update_weights(const std::vector<double>& mmse_common,
                       const std::vector<double>& mmse_private);

/// Augmented WMSE eta * delta - log2(eta).
double augmented_wmse(double weight, double mse);

/// x_m = s_m(P) / I_m(P) with s_m = sqrt(alpha_m) P^H G_m^H u_m.
std::vector<CVec> update_qt_aux(const Precoder& p, const ReceiveFilters& u,
                                const Scenario& scenario, const SystemConfig& cfg);

/// Quadratic-transform surrogate 2 Re(x^H s_m(P)) - I_m(P) ||x||^2.
double qt_surrogate(const CVec& x, const Precoder& p, const ReceiveFilters& u, std::size_t target,
                    const Scenario& scenario, const SystemConfig& cfg);

/// W = (F^H F)^{-1} F^H (P + rho D), with a small ridge only when F^H F is
/// numerically singular. Throws std::runtime_error if even that fails.
CMat update_digital(const CMat& analog, const Precoder& p, const CMat& dual, double penalty);

/// One row-major sweep of unit-modulus coordinate updates minimizing
/// ||P - F W + rho D||^2. An entry whose coefficient is zero keeps its phase.
CMat update_analog(const CMat& analog_prev, const CMat& digital, const Precoder& p,
                   const CMat& dual, double penalty);

/// ||P - F W + rho D||_F^2.
double hybrid_fit_objective(const CMat& analog, const CMat& digital, const Precoder& p,
                            const CMat& dual, double penalty);

// ----- conic subproblem ------------------------------------------------------

/// Penalty part of the augmented Lagrangian; absent for fully-digital and
/// fixed-analog refinement runs.
struct PenaltyTerm {
  CMat dual;
  double penalty = 1.0;
  CMat analog;
  CMat digital;
};

struct InnerConvexResult {
  Precoder precoder;
  CommonRateAlloc alloc;
  double rate_var = 0.0;     // R_s returned by the solver
  bool infeasible = false;
  bool kept_incumbent = false;
  qcqp::Status status = qcqp::Status::kOptimal;
  double gap = 0.0;
  int newton_steps = 0;
};

/// Solves the convex restriction at fixed auxiliary variables. The variable
/// block is V with P = A V: A = I for the precoder itself, or A = F to refine
/// the digital matrix at a fixed analog matrix. `incumbent` is the current
/// (V, c, R_s); the returned point is never worse in the AL objective.
InnerConvexResult solve_inner_convex(const AuxVars& aux, const ReceiveFilters& u,
                                     const std::optional<PenaltyTerm>& penalty,
                                     const CMat& mapping, const CMat& incumbent_v,
                                     const CommonRateAlloc& incumbent_alloc,
                                     const Scenario& scenario, const SystemConfig& cfg,
                                     const OptimizerOptions& opts);

// ----- loops -----------------------------------------------------------------

/// min_k (C_k + R_{p,k}) - Re<D, P - FW> - ||P - FW||^2 / (2 rho).
double augmented_lagrangian(const Precoder& p, const CommonRateAlloc& alloc,
                            const PenaltyTerm& pen, const Scenario& scenario,
                            const SystemConfig& cfg);

struct TraceRow {
  int outer_iter = 0;
  int inner_iter = 0;
  double al_objective = 0.0;
  double residual_inf = 0.0;
  double min_rate = 0.0;
  double min_sensing_rate = 0.0;
  double penalty = 0.0;
};

struct Iterate {
  Precoder precoder;
  HybridBeamformer beamformer;
  CommonRateAlloc alloc;
  ReceiveFilters filters;
};

struct InnerResult {
  Iterate iterate;
  int iterations = 0;
  bool infeasible = false;
  std::vector<double> al_trace;  // per inner iteration
  /// AL at entry followed by the value after each of the seven block updates
  /// of every iteration.
  std::vector<double> block_values;
};

InnerResult inner_loop(const PddState& state, const Scenario& scenario, const SystemConfig& cfg,
                       const Iterate& warm, const OptimizerOptions& opts);

struct Solution {
  HybridBeamformer beamformer;
  Precoder precoder;  // delivered precoder (F W for hybrid runs)
  CommonRateAlloc alloc;
  ReceiveFilters filters;
  RateReport report;
  bool feasible = false;
  bool hybrid = true;
  std::string status;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double residual_inf = 0.0;
  /// Max-min rate of the PDD precoder P itself at termination.
  double pdd_objective = 0.0;
  /// Max-min rate of F W with W re-fit at D = 0 against that P, before polishing.
  double fit_objective = 0.0;
  std::vector<TraceRow> trace;
  std::vector<std::vector<double>> block_values;  // one entry per outer iteration
};

/// Initial hybrid point: uniform random analog phases, matched-filter digital
/// columns scaled to init_power_fraction * P_th.
HybridBeamformer initial_beamformer(const Scenario& scenario, const SystemConfig& cfg,
                                    const OptimizerOptions& opts);

/// PDD double loop. With `warm`, that solution is both the starting point and
/// a retained incumbent: the delivered max-min rate never falls below it.
Solution outer_loop(const Scenario& scenario, const SystemConfig& cfg, const OptimizerOptions& opts,
                    const Solution* warm = nullptr);

/// Same block updates on P alone (no analog/digital split, no penalty).
Solution optimize_fully_digital(const Scenario& scenario, const SystemConfig& cfg,
                                const OptimizerOptions& opts, const Solution* warm = nullptr);

/// Max-min report of a precoder under the optimal common split and the
/// optimal receive filters.
RateReport best_report(const Precoder& p, StreamMode mode, const Scenario& scenario,
                       const SystemConfig& cfg, ReceiveFilters* filters_out = nullptr,
                       CommonRateAlloc* alloc_out = nullptr);

/// True when every sensing rate meets R_th (with `slack`) and power fits.
bool meets_constraints(const RateReport& r, const SystemConfig& cfg, double slack = 0.0);

}  // namespace nfisac

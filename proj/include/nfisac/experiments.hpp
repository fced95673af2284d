#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nfisac/config.hpp"
#include "nfisac/geometry.hpp"
#include "nfisac/optimizer.hpp"

namespace nfisac {

enum class Scheme { kRsmaHybridNf, kRsmaFullDigitalNf, kSdmaHybridNf, kRsmaCommOnlyNf, kRsmaHybridFf };

Scheme parse_scheme(const std::string& name);
std::string to_string(Scheme s);
const std::vector<Scheme>& all_schemes();

/// Placement ranges. Users and targets: range in (min_range, Rayleigh distance),
/// angle uniform in +-max_angle; scatterers in (20 m, 30 m).
struct PlacementSpec {
  double min_range_m = 5.0;
  double max_angle_deg = 60.0;
  double scatterer_min_m = 20.0;
  double scatterer_max_m = 30.0;
};

/// Deterministic per seed (mt19937_64). Draw order: users, targets, scatterers.
Scenario gen_scenario(const SystemConfig& cfg, std::uint64_t seed, const PlacementSpec& place = {});

/// Seed of trial t under base seed s: s XOR t.
inline std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial) { return base ^ trial; }

/// One scheme on one scenario. `warm` seeds the optimizer and is retained as
/// an incumbent when it is feasible for the scheme.
Solution run_baseline(Scheme scheme, const Scenario& scenario, const SystemConfig& cfg,
                      const OptimizerOptions& opts, const Solution* warm = nullptr);

/// Runs a set of schemes on one scenario with the warm-start chain
/// SDMA -> RSMA hybrid -> {fully digital, communication-only}; FF runs cold on
/// far-field channels of the same geometry.
std::map<Scheme, Solution> run_schemes(const std::vector<Scheme>& schemes, const Scenario& scenario,
                                       const SystemConfig& cfg, const OptimizerOptions& opts);

struct SweepSpec {
  std::string axis = "power_dbm";  // power_dbm | n_rf | n_users | n_targets | sense_rate_min
  std::vector<double> values;
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  std::vector<Scheme> schemes;
  /// Trials whose convergence traces are written out.
  std::vector<std::size_t> trace_trials = {0};
  std::size_t workers = 1;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Config for one sweep point.
SystemConfig apply_axis(const SystemConfig& base, const std::string& axis, double value);

struct TrialRecord {
  Scheme scheme = Scheme::kRsmaHybridNf;
  double value = 0.0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  Solution solution;
  double wall_seconds = 0.0;
};

struct SweepCell {
  Scheme scheme = Scheme::kRsmaHybridNf;
  double value = 0.0;
  std::size_t trials = 0;
  std::size_t feasible = 0;
  std::size_t infeasible = 0;
  std::size_t failed = 0;
  double mean_rate = 0.0;
  double std_error = 0.0;
  double mean_outer_iterations = 0.0;
  double wall_seconds = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;     // canonical (scheme, value) order
  std::vector<TrialRecord> trials;  // canonical (scheme, value, trial) order
};

SweepResult run_sweep(const SweepSpec& spec, const SystemConfig& cfg, const OptimizerOptions& opts);

/// Writes sweep_<axis>.csv, trials_<axis>.csv, timing_<axis>.csv and one
/// trace CSV per flagged trial into `dir` (created if missing). Everything
/// except timing_<axis>.csv is byte-deterministic.
void write_sweep_csvs(const SweepSpec& spec, const SystemConfig& cfg, const SweepResult& result,
                      const std::string& dir);

}  // namespace nfisac

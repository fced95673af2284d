#pragma once

#include <string>

#include <json.hpp>

#include "nfisac/config.hpp"
#include "nfisac/experiments.hpp"
#include "nfisac/geometry.hpp"
#include "nfisac/optimizer.hpp"
#include "nfisac/reconstruction.hpp"

namespace nfisac {

using json = nlohmann::json;

// Schema tags carried in every document's "schema" field.
inline constexpr const char* kConfigSchema = "nfisac.config/1";
inline constexpr const char* kScenarioSchema = "nfisac.scenario/1";
inline constexpr const char* kSolutionSchema = "nfisac.solution/1";
inline constexpr const char* kSweepSchema = "nfisac.sweep/1";
inline constexpr const char* kVerifySchema = "nfisac.verify/1";

/// {"re": [[...]], "im": [[...]]}, row-major.
json to_json(const CMat& m);
CMat cmat_from_json(const json& j);

json config_to_json(const SystemConfig& cfg);
/// Overrides fields present in `j` on top of `base`. Power may be given as
/// power_dbm or power_mw, noise as noise_comm_dbm / noise_sense_dbm.
SystemConfig config_from_json(const json& j, SystemConfig base);

/// Geometry in degrees; channels inlined when `with_channels`.
json scenario_to_json(const Scenario& s, bool with_channels = false);
/// Geometry is authoritative: channels are re-synthesized from it under `cfg`.
Scenario scenario_from_json(const json& j, const SystemConfig& cfg);

json solution_to_json(const Solution& s);
/// Restores F (from phases), W, P, the split and the filters; the report is
/// re-evaluated by the caller.
Solution solution_from_json(const json& j);

json report_to_json(const RateReport& r);
json verification_to_json(const VerificationReport& r);

json sweep_spec_to_json(const SweepSpec& s);
SweepSpec sweep_spec_from_json(const json& j);

/// outer_iter,inner_iter,AL_objective,residual_inf,min_rate,min_sensing_rate,rho
std::string trace_csv_header();
void write_trace_csv(const Solution& s, const std::string& path);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace nfisac

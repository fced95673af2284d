#include "nfisac/config.hpp"

#include <cmath>
#include <stdexcept>

namespace nfisac {

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

double mw_to_dbm(double mw) {
  if (!(mw > 0.0)) throw std::domain_error("mw_to_dbm: power must be positive");
  return 10.0 * std::log10(mw);
}

void SystemConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("SystemConfig: ") + what);
  };
  require(n_tx > 0 && n_rx > 0 && n_rf > 0, "antenna and RF-chain counts must be positive");
  require(n_rf <= n_tx, "n_rf must not exceed n_tx");
  require(n_users > 0, "n_users must be positive");
  require(n_targets > 0, "n_targets must be positive");
  require(spacing_m > 0.0, "spacing_m must be positive");
  require(carrier_hz > 0.0 && wavelength_m > 0.0, "carrier and wavelength must be positive");
  require(std::abs(wavelength_m * carrier_hz / kSpeedOfLight - 1.0) <= 1e-6,
          "wavelength_m * carrier_hz must equal the speed of light");
  require(power_max_mw > 0.0, "power_max_mw must be positive");
  require(noise_comm_mw > 0.0 && noise_sense_mw > 0.0, "noise powers must be positive");
  require(sense_rate_min_bps >= 0.0, "sense_rate_min_bps must be non-negative");
  require(reflect_coeffs.size() == n_targets, "reflect_coeffs must have n_targets entries");
  for (double a : reflect_coeffs) require(a > 0.0, "reflect_coeffs must be positive");
  require(sic_residual >= 0.0 && sic_residual <= 1.0, "sic_residual must lie in [0, 1]");
}

void SystemConfig::fit_reflect_coeffs() { reflect_coeffs.resize(n_targets, 1.0); }

Profile parse_profile(const std::string& name) {
  if (name == "desk") return Profile::kDesk;
  if (name == "paper") return Profile::kPaper;
  throw std::invalid_argument("unknown profile '" + name + "' (expected desk|paper)");
}

std::string to_string(Profile p) { return p == Profile::kDesk ? "desk" : "paper"; }

SystemConfig make_profile(Profile p) {
  SystemConfig cfg;
  if (p == Profile::kPaper) {
    cfg.n_tx = 64;
    cfg.n_rx = 64;
    cfg.n_rf = 8;
    cfg.n_users = 6;
    cfg.n_targets = 4;
    cfg.sense_rate_min_bps = 6.0;
  }
  cfg.spacing_m = 0.5 / static_cast<double>(cfg.n_tx - 1);
  cfg.carrier_hz = 30e9;
  cfg.wavelength_m = kSpeedOfLight / cfg.carrier_hz;
  cfg.power_max_mw = dbm_to_mw(30.0);
  cfg.noise_comm_mw = dbm_to_mw(-80.0);
  cfg.noise_sense_mw = dbm_to_mw(-160.0);
  cfg.n_scatterers = 2;
  cfg.reflect_coeffs.assign(cfg.n_targets, 1.0);
  cfg.sic_residual = 0.0;
  return cfg;
}

}  // namespace nfisac

#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nfisac {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

// Rounded value; keeps lambda = 1 cm at 30 GHz.
inline constexpr double kSpeedOfLight = 3.0e8;
inline constexpr double kPi = 3.14159265358979323846;

double dbm_to_mw(double dbm);
double mw_to_dbm(double mw);

/// Physical and algorithmic scalars shared by every module.
///
/// Powers are linear milliwatts. dBm only appears at the CLI and in CSV
/// columns that carry both units.
struct SystemConfig {
  std::size_t n_tx = 16;
  std::size_t n_rx = 16;
  std::size_t n_rf = 8;
  std::size_t n_users = 3;
  std::size_t n_targets = 2;
  std::size_t n_scatterers = 2;
  double spacing_m = 0.5 / 15.0;
  double carrier_hz = 30e9;
  double wavelength_m = kSpeedOfLight / 30e9;
  double power_max_mw = 1000.0;
  double noise_comm_mw = 1e-8;
  double noise_sense_mw = 1e-16;
  double sense_rate_min_bps = 4.0;
  std::vector<double> reflect_coeffs = {1.0, 1.0};
  double sic_residual = 0.0;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  double tx_aperture_m() const { return static_cast<double>(n_tx - 1) * spacing_m; }
  double rx_aperture_m() const { return static_cast<double>(n_rx - 1) * spacing_m; }
  double reflect(std::size_t m) const { return reflect_coeffs.at(m); }

  /// Resizes reflect_coeffs to n_targets, padding with 1.
  void fit_reflect_coeffs();
};

enum class Profile { kDesk, kPaper };

Profile parse_profile(const std::string& name);
std::string to_string(Profile p);

/// Desk profile: N_t = N_r = 16, N_f = 8, K = 3, M = 2, R_th = 4 bit/s/Hz.
/// Paper profile: the full 64-antenna configuration (K = 6, M = 4, R_th = 6).
/// Both keep a 0.5 m aperture at 30 GHz so the Rayleigh distance is 50 m.
SystemConfig make_profile(Profile p);

}  // namespace nfisac

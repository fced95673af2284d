#pragma once

#include <cstdint>
#include <random>

#include "nfisac/config.hpp"
#include "nfisac/experiments.hpp"
#include "nfisac/geometry.hpp"

namespace nfisac::testing {

inline SystemConfig small_config(std::size_t n_tx, std::size_t n_rf, std::size_t k, std::size_t m,
                                 double r_th) {
  SystemConfig c;
  c.n_tx = n_tx;
  c.n_rx = n_tx;
  c.n_rf = n_rf;
  c.n_users = k;
  c.n_targets = m;
  c.sense_rate_min_bps = r_th;
  // keep the 0.5 m aperture so the Rayleigh distance stays 50 m
  c.spacing_m = 0.5 / static_cast<double>(n_tx - 1);
  c.fit_reflect_coeffs();
  return c;
}

inline CVec random_cvec(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CVec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = cplx(g(rng), g(rng));
  return v;
}

inline CVec random_unit(Eigen::Index n, std::mt19937_64& rng) {
  CVec v = random_cvec(n, rng);
  return v / v.norm();
}

inline CMat random_cmat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  CMat m(r, c);
  for (Eigen::Index k = 0; k < c; ++k) m.col(k) = random_cvec(r, rng);
  return m;
}

/// Random precoder rescaled to `power` mW.
inline CMat random_precoder(Eigen::Index n_tx, Eigen::Index cols, double power, std::mt19937_64& rng) {
  CMat p = random_cmat(n_tx, cols, rng);
  return p * std::sqrt(power) / p.norm();
}

inline CMat random_phases(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ph(-kPi, kPi);
  CMat f(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) f(i, k) = std::polar(1.0, ph(rng));
  return f;
}

}  // namespace nfisac::testing

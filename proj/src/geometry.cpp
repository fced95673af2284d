#include "nfisac/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace nfisac {

namespace {

void require_range(double r, const char* who) {
  if (!(r > 0.0)) {
    throw std::domain_error(std::string(who) + ": range must be strictly positive");
  }
}

cplx unit_phase(double phase) { return {std::cos(phase), std::sin(phase)}; }

}  // namespace

double rayleigh_distance(double aperture_m, double wavelength_m) {
  if (!(wavelength_m > 0.0)) throw std::domain_error("rayleigh_distance: wavelength must be positive");
  if (aperture_m < 0.0) throw std::domain_error("rayleigh_distance: aperture must be non-negative");
  return 2.0 * aperture_m * aperture_m / wavelength_m;
}

double polar_distance(const PolarCoord& a, const PolarCoord& b) {
  const double ax = a.range_m * std::cos(a.angle_rad);
  const double ay = a.range_m * std::sin(a.angle_rad);
  const double bx = b.range_m * std::cos(b.angle_rad);
  const double by = b.range_m * std::sin(b.angle_rad);
  return std::hypot(ax - bx, ay - by);
}

CVec nf_steering(const PolarCoord& coord, std::size_t n_elems, double spacing_m,
                 double wavelength_m) {
  require_range(coord.range_m, "nf_steering");
  const double k = 2.0 * kPi / wavelength_m;
  const double s = std::sin(coord.angle_rad);
  const double c2 = std::cos(coord.angle_rad) * std::cos(coord.angle_rad);
  CVec a(static_cast<Eigen::Index>(n_elems));
  for (std::size_t n = 1; n <= n_elems; ++n) {
    const double nd = static_cast<double>(n) * spacing_m;
    const double delta = nd * s - nd * nd * c2 / (2.0 * coord.range_m);
    a(static_cast<Eigen::Index>(n - 1)) = unit_phase(k * delta);
  }
  return a;
}

CVec ff_steering(double angle_rad, std::size_t n_elems, double spacing_m, double wavelength_m) {
  const double k = 2.0 * kPi / wavelength_m;
  const double s = std::sin(angle_rad);
  CVec a(static_cast<Eigen::Index>(n_elems));
  for (std::size_t n = 1; n <= n_elems; ++n) {
    a(static_cast<Eigen::Index>(n - 1)) = unit_phase(k * static_cast<double>(n) * spacing_m * s);
  }
  return a;
}

CVec steering(ArrayModel model, const PolarCoord& coord, std::size_t n_elems, double spacing_m,
              double wavelength_m) {
  if (model == ArrayModel::kFarField) {
    require_range(coord.range_m, "ff_steering");
    return ff_steering(coord.angle_rad, n_elems, spacing_m, wavelength_m);
  }
  return nf_steering(coord, n_elems, spacing_m, wavelength_m);
}

cplx los_gain(double range_m, const SystemConfig& cfg) {
  require_range(range_m, "los_gain");
  const double mag = kSpeedOfLight / (4.0 * kPi * cfg.carrier_hz * range_m);
  return mag * unit_phase(-2.0 * kPi * range_m / cfg.wavelength_m);
}

cplx nlos_gain(double range_m, double link_range_m, const SystemConfig& cfg) {
  const double total = range_m + link_range_m;
  require_range(range_m, "nlos_gain");
  const double mag = kSpeedOfLight / (4.0 * kPi * cfg.carrier_hz * total);
  return mag * unit_phase(-2.0 * kPi * total / cfg.wavelength_m);
}

cplx round_trip_gain(double range_m, const SystemConfig& cfg) {
  require_range(range_m, "round_trip_gain");
  const double one_way = kSpeedOfLight / (4.0 * kPi * cfg.carrier_hz * range_m);
  return one_way * one_way * unit_phase(-4.0 * kPi * range_m / cfg.wavelength_m);
}

CVec build_comm_channel(const PolarCoord& user, const std::vector<Scatterer>& scatterers,
                        const SystemConfig& cfg, ArrayModel model) {
  if (scatterers.size() != cfg.n_scatterers) {
    throw std::invalid_argument("build_comm_channel: expected n_scatterers scatterers");
  }
  CVec h = los_gain(user.range_m, cfg) *
           steering(model, user, cfg.n_tx, cfg.spacing_m, cfg.wavelength_m);
  for (const auto& sc : scatterers) {
    h += nlos_gain(sc.position.range_m, sc.link_range_m, cfg) *
         steering(model, sc.position, cfg.n_tx, cfg.spacing_m, cfg.wavelength_m);
  }
  return h;
}

CMat build_sense_channel(const PolarCoord& target, const SystemConfig& cfg, ArrayModel model) {
  const CVec b = steering(model, target, cfg.n_rx, cfg.spacing_m, cfg.wavelength_m);
  const CVec a = steering(model, target, cfg.n_tx, cfg.spacing_m, cfg.wavelength_m);
  return round_trip_gain(target.range_m, cfg) * b * a.transpose();
}

Scenario synthesize(std::vector<PolarCoord> users, std::vector<std::vector<Scatterer>> scatterers,
                    std::vector<PolarCoord> targets, const SystemConfig& cfg, ArrayModel model) {
  if (users.size() != scatterers.size()) {
    throw std::invalid_argument("synthesize: one scatterer list per user required");
  }
  Scenario s;
  s.model = model;
  s.users = std::move(users);
  s.scatterers = std::move(scatterers);
  s.targets = std::move(targets);
  for (std::size_t k = 0; k < s.users.size(); ++k) {
    s.comm_channels.push_back(build_comm_channel(s.users[k], s.scatterers[k], cfg, model));
    s.los_gains.push_back(los_gain(s.users[k].range_m, cfg));
    std::vector<cplx> g;
    for (const auto& sc : s.scatterers[k]) {
      g.push_back(nlos_gain(sc.position.range_m, sc.link_range_m, cfg));
    }
    s.nlos_gains.push_back(std::move(g));
  }
  for (const auto& t : s.targets) {
    s.sense_channels.push_back(build_sense_channel(t, cfg, model));
    s.target_gains.push_back(round_trip_gain(t.range_m, cfg));
  }
  return s;
}

Scenario with_model(const Scenario& s, const SystemConfig& cfg, ArrayModel model) {
  return synthesize(s.users, s.scatterers, s.targets, cfg, model);
}

}  // namespace nfisac

#pragma once

#include <vector>

#include "nfisac/config.hpp"

namespace nfisac {

/// Range (m) and angle (rad) relative to the array reference point.
struct PolarCoord {
  double range_m = 0.0;
  double angle_rad = 0.0;
};

struct Scatterer {
  PolarCoord position;
  /// Distance between the scatterer and the user it serves.
  double link_range_m = 0.0;
};

enum class ArrayModel { kNearField, kFarField };

/// Geometry plus the synthesized channels.
///
/// comm_channels[k] is h_k (length N_t); sense_channels[m] is the rank-one
/// round-trip matrix G_m (N_r x N_t).
struct Scenario {
  ArrayModel model = ArrayModel::kNearField;
  std::vector<PolarCoord> users;
  std::vector<std::vector<Scatterer>> scatterers;
  std::vector<PolarCoord> targets;

  std::vector<CVec> comm_channels;
  std::vector<CMat> sense_channels;
  std::vector<cplx> los_gains;
  std::vector<std::vector<cplx>> nlos_gains;
  std::vector<cplx> target_gains;

  std::size_t n_users() const { return comm_channels.size(); }
  std::size_t n_targets() const { return sense_channels.size(); }
};

/// 2 D^2 / lambda. Throws std::domain_error for a non-positive wavelength.
double rayleigh_distance(double aperture_m, double wavelength_m);

/// Cartesian distance between two polar points.
double polar_distance(const PolarCoord& a, const PolarCoord& b);

/// Near-field response with the second-order (Fresnel) phase law. Entry n
/// (1-based) is exp(j 2 pi / lambda * (n d sin t - (n d)^2 cos^2 t / (2 r))).
CVec nf_steering(const PolarCoord& coord, std::size_t n_elems, double spacing_m,
                 double wavelength_m);

/// Plane-wave response, entry n is exp(j 2 pi n d sin t / lambda).
CVec ff_steering(double angle_rad, std::size_t n_elems, double spacing_m, double wavelength_m);

CVec steering(ArrayModel model, const PolarCoord& coord, std::size_t n_elems,
              double spacing_m, double wavelength_m);

// Free-space gains. The NLoS path loss runs over the full BS-scatterer-user
// distance; the round-trip magnitude is the square of the one-way loss.
cplx los_gain(double range_m, const SystemConfig& cfg);
cplx nlos_gain(double range_m, double link_range_m, const SystemConfig& cfg);
cplx round_trip_gain(double range_m, const SystemConfig& cfg);

CVec build_comm_channel(const PolarCoord& user, const std::vector<Scatterer>& scatterers,
                        const SystemConfig& cfg, ArrayModel model = ArrayModel::kNearField);

CMat build_sense_channel(const PolarCoord& target, const SystemConfig& cfg,
                         ArrayModel model = ArrayModel::kNearField);

/// Fills every channel and gain of a scenario from its geometry.
Scenario synthesize(std::vector<PolarCoord> users, std::vector<std::vector<Scatterer>> scatterers,
                    std::vector<PolarCoord> targets, const SystemConfig& cfg,
                    ArrayModel model = ArrayModel::kNearField);

/// Same geometry, channels rebuilt with another array model.
Scenario with_model(const Scenario& s, const SystemConfig& cfg, ArrayModel model);

}  // namespace nfisac

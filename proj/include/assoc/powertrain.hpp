#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace assoc {

/// Longitudinal car model: engine thrust capped by power, idle creep,
/// brake, aerodynamic drag, rolling resistance. SI units throughout.
struct PlantParams {
  double mass_kg = 1800.0;
  double drag_area = 0.7;          // c_d * A [m^2]
  double air_density = 1.2;        // [kg/m^3]
  double roll_coeff = 0.012;
  double gravity = 9.81;           // [m/s^2]
  double engine_power = 0.0;       // [W], set by calibrate()
  double engine_ref_speed = 5.0;   // [m/s], thrust cap point at low speed
  double idle_force = 900.0;       // [N]
  double idle_cutoff_speed = 4.2;  // [m/s], creep fades out here
  double brake_force_max = 14000.0;  // [N]
  double dt = 0.01;                // [s]
};

struct PlantState {
  double speed = 0.0;  // [m/s], never negative
};

/// Net longitudinal force at speed v for pedal positions p, b in [0,1].
double net_force(const PlantParams& params, double v, double p, double b);

/// One forward-Euler step; speed clamps at standstill.
PlantState plant_step(const PlantParams& params, PlantState state, double p, double b);

/// Full-throttle equilibrium speed (m/s), found by bisection on net force.
double full_throttle_equilibrium(const PlantParams& params);

/// Sets engine_power so the full-throttle equilibrium speed is 50 m/s
/// (180 km/h), by bisection on the power. Throws when the resistances
/// admit no equilibrium in the bracket.
PlantParams calibrate(PlantParams params);

/// Random-walk driver: one pedal active at a time, Gaussian increments,
/// occasional regime flips between accelerating and braking.
struct DriverParams {
  double walk_sigma = 0.35;          // pedal diffusion [1/sqrt(s)]
  double regime_switch_prob = 0.002; // per step
  std::uint64_t seed = 1;
};

struct DriverState {
  bool braking = false;
  double pedal = 0.0;  // value of the active pedal
};

/// Advances the driver one tick; returns (p, b) with the inactive pedal
/// exactly zero.
std::pair<double, double> driver_step(const DriverParams& params, DriverState& state,
                                      std::mt19937_64& rng, double dt);

/// One modeling sample: (v(t-dt), v(t), p(t), b(t)) with speeds in km/h.
using DriveSample = std::array<double, 4>;

inline const std::vector<std::string> kSampleNames = {"v_prev", "v", "p", "b"};

inline constexpr double kMpsToKmh = 3.6;

/// Runs the driver against the plant for the given duration and emits one
/// sample per tick. Deterministic for a fixed driver seed.
std::vector<DriveSample> simulate_drive(const PlantParams& plant, const DriverParams& driver,
                                        double duration_s);

}  // namespace assoc

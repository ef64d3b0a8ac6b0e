#include "assoc/powertrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace assoc {

namespace {

void check_params(const PlantParams& p) {
  if (!(p.mass_kg > 0.0) || !(p.drag_area > 0.0) || !(p.air_density > 0.0) ||
      !(p.roll_coeff > 0.0) || !(p.gravity > 0.0) || !(p.engine_ref_speed > 0.0) ||
      !(p.idle_force > 0.0) || !(p.idle_cutoff_speed > 0.0) || !(p.brake_force_max > 0.0)) {
    throw std::invalid_argument("PlantParams: all parameters must be positive");
  }
  if (!(p.dt >= 1e-4) || !(p.dt <= 0.1)) {
    throw std::invalid_argument("PlantParams: dt must lie in [1e-4, 0.1]");
  }
}

double engine_force(const PlantParams& params, double v, double p) {
  const double thrust = p * params.engine_power / std::max(v, params.engine_ref_speed);
  const double creep =
      params.idle_force * std::max(0.0, 1.0 - v / params.idle_cutoff_speed) * (1.0 - p);
  return thrust + creep;
}

}  // namespace

double net_force(const PlantParams& params, double v, double p, double b) {
  const double fe = engine_force(params, v, p);
  const double roll = params.roll_coeff * params.mass_kg * params.gravity;
  if (v > 0.0) {
    const double drag = 0.5 * params.air_density * params.drag_area * v * v;
    return fe - b * params.brake_force_max - drag - roll;
  }
  // Standstill: the brake does not act and rolling resistance only cancels
  // thrust, it cannot push the car backwards.
  return std::max(0.0, fe - roll);
}

PlantState plant_step(const PlantParams& params, PlantState state, double p, double b) {
  check_params(params);
  if (!(p >= 0.0) || !(p <= 1.0) || !(b >= 0.0) || !(b <= 1.0)) {
    throw std::invalid_argument("plant_step: pedal values must lie in [0, 1]");
  }
  const double f = net_force(params, state.speed, p, b);
  state.speed = std::max(0.0, state.speed + params.dt * f / params.mass_kg);
  return state;
}

double full_throttle_equilibrium(const PlantParams& params) {
  double lo = 0.0;
  double hi = 200.0;
  if (net_force(params, hi, 1.0, 0.0) > 0.0) {
    throw std::runtime_error("powertrain: no full-throttle equilibrium below 200 m/s");
  }
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (net_force(params, mid, 1.0, 0.0) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

PlantParams calibrate(PlantParams params) {
  constexpr double target = 50.0;  // m/s
  double lo = 1e3;
  double hi = 1e7;
  params.engine_power = lo;
  if (full_throttle_equilibrium(params) > target) {
    throw std::runtime_error("calibrate: resistances too weak for the power bracket");
  }
  params.engine_power = hi;
  if (full_throttle_equilibrium(params) < target) {
    throw std::runtime_error("calibrate: resistances too strong for the power bracket");
  }
  for (int i = 0; i < 200; ++i) {
    params.engine_power = 0.5 * (lo + hi);
    const double eq = full_throttle_equilibrium(params);
    if (std::abs(eq - target) <= 0.005) break;
    if (eq < target) {
      lo = params.engine_power;
    } else {
      hi = params.engine_power;
    }
  }
  return params;
}

std::pair<double, double> driver_step(const DriverParams& params, DriverState& state,
                                      std::mt19937_64& rng, double dt) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (uni(rng) < params.regime_switch_prob) {
    state.braking = !state.braking;
    state.pedal = 0.0;
  }
  std::normal_distribution<double> norm(0.0, 1.0);
  state.pedal = std::clamp(state.pedal + params.walk_sigma * std::sqrt(dt) * norm(rng), 0.0, 1.0);
  return state.braking ? std::make_pair(0.0, state.pedal) : std::make_pair(state.pedal, 0.0);
}

std::vector<DriveSample> simulate_drive(const PlantParams& plant, const DriverParams& driver,
                                        double duration_s) {
  check_params(plant);
  if (!(duration_s > 0.0)) throw std::invalid_argument("simulate_drive: duration must be positive");
  if (!(driver.walk_sigma >= 0.0)) throw std::invalid_argument("simulate_drive: negative sigma");
  if (driver.regime_switch_prob < 0.0 || driver.regime_switch_prob > 1.0) {
    throw std::invalid_argument("simulate_drive: switch probability outside [0, 1]");
  }

  const auto ticks = static_cast<std::size_t>(std::llround(duration_s / plant.dt));
  std::vector<DriveSample> samples;
  samples.reserve(ticks);

  std::mt19937_64 rng(driver.seed);
  DriverState dstate;
  PlantState pstate;
  for (std::size_t i = 0; i < ticks; ++i) {
    const auto [p, b] = driver_step(driver, dstate, rng, plant.dt);
    const double v_prev = pstate.speed;
    pstate = plant_step(plant, pstate, p, b);
    samples.push_back({v_prev * kMpsToKmh, pstate.speed * kMpsToKmh, p, b});
  }
  return samples;
}

}  // namespace assoc

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "assoc/associate.hpp"
#include "assoc/mixture.hpp"
#include "assoc/powertrain.hpp"

namespace assoc {

struct ControllerConfig {
  int order = 1;                  // regression order of the backward model
  bool online_learn = false;      // feed realized transitions back into the model
  double clamp_low = 0.0;
  double clamp_high = 1.0;
  bool exclusive_pedals = true;   // zero the smaller of the two commands
  double plausibility_floor = 0.0;  // diagnostic threshold, recorded not enforced
  std::uint64_t seed = 1;

  // In-loop plausibility bookkeeping: the reference sample is rebuilt from a
  // model snapshot after this many updates, so learning runs stay cheap.
  int plaus_mc_samples = 500;
  std::uint64_t plaus_refresh_updates = 50;

  // Trial-and-error exploration, active only while learning online: when the
  // backward answer is implausible and the error has stopped shrinking, the
  // commands are replaced by seeded pedal noise.
  double explore_below = 0.02;
  double explore_sigma = 0.35;
};

/// Piecewise-constant target speed profile.
struct ProfilePoint {
  double time_s = 0.0;
  double target_kmh = 0.0;
};

struct TargetProfile {
  std::vector<ProfilePoint> points;

  static TargetProfile constant(double target_kmh);
  void validate() const;  // strictly increasing times, nonnegative speeds
  double at(double time_s) const;
};

struct TraceRow {
  double time_s = 0.0;
  double target_kmh = 0.0;
  double actual_kmh = 0.0;
  double p = 0.0;
  double b = 0.0;
  double plausibility = 0.0;
  bool learned = false;
};

using ControlTrace = std::vector<TraceRow>;

/// Completes (v_now, ?, p, b): the model's prediction of the next speed.
double forward_predict(const MixtureModel& model, double v_now_kmh, double p, double b,
                       int order = 1);

struct PedalCommand {
  double p = 0.0;
  double b = 0.0;
  double plausibility = 0.0;
  bool fallback = false;  // empty model, command is a blind guess
};

/// Completes (v_now, v_target, ?, ?) and post-processes the raw commands:
/// clamp to [0,1], then zero the smaller pedal when exclusivity is on. The
/// plausibility of the post-processed vector is the controller's own
/// assessment of the command.
PedalCommand backward_control(const MixtureModel& model, double v_now_kmh, double v_target_kmh,
                              const ControllerConfig& config,
                              const PlausibilityRef* ref = nullptr);

/// Closed loop: per tick read the target, ask the backward model, drive the
/// plant, optionally learn from the realized transition. Deterministic for
/// fixed model, plant, profile, and seed.
ControlTrace run_control(MixtureModel& model, const PlantParams& plant,
                         const TargetProfile& profile, double duration_s,
                         const ControllerConfig& config);

/// Offline training: feeds every sample through the model's update path.
void teach(MixtureModel& model, std::span<const DriveSample> samples);

}  // namespace assoc

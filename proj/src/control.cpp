#include "assoc/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace assoc {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_powertrain_layout(const MixtureModel& model) {
  if (model.dim() != 4) {
    throw std::invalid_argument("control: model must be over (v_prev, v, p, b)");
  }
}

}  // namespace

TargetProfile TargetProfile::constant(double target_kmh) {
  TargetProfile p;
  p.points.push_back({0.0, target_kmh});
  p.validate();
  return p;
}

void TargetProfile::validate() const {
  if (points.empty()) throw std::invalid_argument("TargetProfile: no breakpoints");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].target_kmh >= 0.0)) {
      throw std::invalid_argument("TargetProfile: negative target speed");
    }
    if (i > 0 && !(points[i].time_s > points[i - 1].time_s)) {
      throw std::invalid_argument("TargetProfile: times must be strictly increasing");
    }
  }
}

double TargetProfile::at(double time_s) const {
  double target = points.front().target_kmh;
  for (const ProfilePoint& p : points) {
    if (p.time_s <= time_s) {
      target = p.target_kmh;
    } else {
      break;
    }
  }
  return target;
}

double forward_predict(const MixtureModel& model, double v_now_kmh, double p, double b,
                       int order) {
  check_powertrain_layout(model);
  const Vec values = {v_now_kmh, kNan, p, b};
  const Mask mask(std::vector<std::uint8_t>{1, 0, 1, 1});
  return complete_only(model, values, mask, order).completed[1];
}

PedalCommand backward_control(const MixtureModel& model, double v_now_kmh, double v_target_kmh,
                              const ControllerConfig& config, const PlausibilityRef* ref) {
  PedalCommand cmd;
  if (model.empty()) {
    cmd.fallback = true;
    return cmd;
  }
  check_powertrain_layout(model);
  Vec values = {v_now_kmh, v_target_kmh, kNan, kNan};
  const Mask mask(std::vector<std::uint8_t>{1, 1, 0, 0});
  AssociateResult r = complete_only(model, values, mask, config.order);

  cmd.p = std::clamp(r.completed[2], config.clamp_low, config.clamp_high);
  cmd.b = std::clamp(r.completed[3], config.clamp_low, config.clamp_high);
  if (config.exclusive_pedals) {
    if (cmd.b <= cmd.p) {
      cmd.b = 0.0;
    } else {
      cmd.p = 0.0;
    }
  }
  values[2] = cmd.p;
  values[3] = cmd.b;
  if (ref) {
    cmd.plausibility = ref->plausibility(model, values);
  } else {
    cmd.plausibility = plausibility(model, values, config.plaus_mc_samples, config.seed);
  }
  return cmd;
}

ControlTrace run_control(MixtureModel& model, const PlantParams& plant,
                         const TargetProfile& profile, double duration_s,
                         const ControllerConfig& config) {
  profile.validate();
  if (!(duration_s > 0.0)) throw std::invalid_argument("run_control: duration must be positive");
  if (!(config.clamp_low <= config.clamp_high)) {
    throw std::invalid_argument("run_control: clamp bounds out of order");
  }
  if (!model.empty()) check_powertrain_layout(model);

  const auto ticks = static_cast<std::size_t>(std::llround(duration_s / plant.dt));
  ControlTrace trace;
  trace.reserve(ticks);

  std::mt19937_64 explore_rng(config.seed);
  std::normal_distribution<double> explore_noise(0.5, config.explore_sigma);

  // Plausibility reference over a model snapshot, refreshed as the model
  // grows. The snapshot keeps ranking consistent between refreshes.
  std::optional<PlausibilityRef> ref;
  std::optional<MixtureModel> snapshot;
  std::uint64_t ref_built_at = 0;
  auto refresh_ref = [&]() {
    if (model.empty()) {
      ref.reset();
      snapshot.reset();
      return;
    }
    if (!ref || model.update_count() - ref_built_at >= config.plaus_refresh_updates) {
      snapshot = model;
      ref.emplace(*snapshot, config.plaus_mc_samples, config.seed);
      ref_built_at = model.update_count();
    }
  };

  // Errors one second back, for the exploration stall test.
  const auto window = static_cast<std::size_t>(std::llround(1.0 / plant.dt));
  std::vector<double> err_history;
  err_history.reserve(ticks);

  PlantState state;
  for (std::size_t i = 0; i < ticks; ++i) {
    const double t = static_cast<double>(i) * plant.dt;
    const double target = profile.at(t);
    const double v_now = state.speed * kMpsToKmh;
    const double err = std::abs(target - v_now);

    refresh_ref();
    PedalCommand cmd = backward_control(model, v_now, target, config, ref ? &*ref : nullptr);

    if (config.online_learn) {
      const bool stalled = err_history.size() >= window &&
                           (err_history[err_history.size() - window] - err) < 0.5;
      const bool implausible = cmd.plausibility < config.explore_below;
      if (cmd.fallback || (implausible && stalled)) {
        const double pedal = std::clamp(explore_noise(explore_rng), 0.0, 1.0);
        if (target >= v_now) {
          cmd.p = pedal;
          cmd.b = 0.0;
        } else {
          cmd.p = 0.0;
          cmd.b = pedal;
        }
      }
    }
    err_history.push_back(err);

    const double v_prev_kmh = v_now;
    state = plant_step(plant, state, cmd.p, cmd.b);
    const double v_kmh = state.speed * kMpsToKmh;

    bool learned = false;
    if (config.online_learn) {
      const Vec sample = {v_prev_kmh, v_kmh, cmd.p, cmd.b};
      model.add_sample(sample);
      learned = true;
    }
    trace.push_back({t, target, v_kmh, cmd.p, cmd.b, cmd.plausibility, learned});
  }
  return trace;
}

void teach(MixtureModel& model, std::span<const DriveSample> samples) {
  if (model.dim() != 4) throw std::invalid_argument("teach: model must be over (v_prev, v, p, b)");
  for (const DriveSample& s : samples) {
    model.add_sample(s);
  }
}

}  // namespace assoc

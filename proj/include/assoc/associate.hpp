#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "assoc/mixture.hpp"

namespace assoc {

/// Known/missing indicator for a query vector: 1 = known, 0 = to be filled.
struct Mask {
  std::vector<std::uint8_t> flags;

  Mask() = default;
  explicit Mask(std::vector<std::uint8_t> f) : flags(std::move(f)) {}
  static Mask all_known(std::size_t d) { return Mask(std::vector<std::uint8_t>(d, 1)); }

  std::size_t size() const { return flags.size(); }
  std::vector<std::size_t> known_indices() const;
  std::vector<std::size_t> unknown_indices() const;
};

/// Query-local affine fit: prediction for unknown component i is
/// intercept[i] + slope[i] . x_known.
struct LocalLinearFit {
  Vec intercept;                // one entry per unknown component
  std::vector<Vec> slope;       // [unknown][known]
  double weight_mass = 0.0;     // sum_k a_k phi(x - c_k | known), diagnostic
  double ridge_used = 0.0;      // final ridge factor after any escalation
};

struct AssociateResult {
  Vec completed;
  double plausibility = 0.0;
  std::optional<LocalLinearFit> fit;
  int order = 0;  // regression order actually used
};

/// Seeded Monte-Carlo reference for plausibility ranking: density values of
/// draws from the model, sorted. Ranking a point against it equals the
/// direct estimate of P(density(X) <= density(point)) draw for draw.
class PlausibilityRef {
 public:
  PlausibilityRef(const MixtureModel& model, int mc_samples, std::uint64_t seed);
  double rank_log_density(double point_log_density) const;
  double plausibility(const MixtureModel& model, std::span<const double> point) const;

 private:
  std::vector<double> sorted_log_densities_;
};

struct AssociateOptions {
  int order = 1;
  double ridge = 1e-8;
  bool allow_all_unknown = false;  // opt-in: all-unknown query returns the mixture mean
  int mc_samples = 2000;
  std::uint64_t seed = 20140624;
  const PlausibilityRef* plaus_ref = nullptr;  // reuse a reference sample across calls
};

/// Zero-order completion: conditional mean of the mixture given the known
/// components. Identical arithmetic to condition()'s mean.
Vec nw_estimate(const MixtureModel& model, const Mask& mask, std::span<const double> values);

/// Weighted local-linear fit of each unknown component against the known
/// ones, regression points being the kernel centers. Ridge escalates by
/// factors of ten (up to 1e-2) on ill-conditioned systems; returns nullopt
/// if the system stays singular so callers can fall back to order zero.
std::optional<LocalLinearFit> local_linear_fit(const MixtureModel& model, const Mask& mask,
                                               std::span<const double> values, double ridge,
                                               bool constrain_slope_zero = false);

/// Fills the masked components of a vector, scores the completed vector's
/// plausibility, and reports the fit used. Known components pass through
/// bit-exact. An all-known mask turns the call into pure recognition.
AssociateResult associate(const MixtureModel& model, std::span<const double> values,
                          const Mask& mask, const AssociateOptions& opts = {});

/// Completion without the plausibility pass; used where the caller scores
/// plausibility itself. Returns the completed vector, the fit (when order 1
/// succeeded), and the order actually used.
AssociateResult complete_only(const MixtureModel& model, std::span<const double> values,
                              const Mask& mask, int order, double ridge = 1e-8,
                              bool allow_all_unknown = false);

/// Monte-Carlo estimate of P(density(X) <= density(point)), X ~ model.
double plausibility(const MixtureModel& model, std::span<const double> point, int mc_samples,
                    std::uint64_t seed);

struct CorruptFinding {
  std::size_t index = 0;
  double plausibility_gain = 0.0;
};

/// For each (known) component, re-runs the completion with that component
/// masked out and reports the ones whose reconstruction raises the
/// plausibility by more than the threshold, largest gain first.
std::vector<CorruptFinding> detect_corrupt(const MixtureModel& model,
                                           std::span<const double> values, double threshold,
                                           const AssociateOptions& opts = {});

struct ClassifyResult {
  static constexpr std::size_t kNoLabel = std::numeric_limits<std::size_t>::max();
  std::size_t label = kNoLabel;
  Vec scores;
  double plausibility = 0.0;
};

/// Classification over a model trained on (pattern, one-hot class) vectors:
/// zero-order completion of the class block, argmax with ties broken toward
/// the lower index. class_count zero degenerates to pure recognition.
ClassifyResult classify(const MixtureModel& model, std::span<const double> pattern,
                        std::size_t class_count, const AssociateOptions& opts = {});

}  // namespace assoc

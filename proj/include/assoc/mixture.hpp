#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace assoc {

using Vec = std::vector<double>;

/// Hard floor for bandwidths and center spreads; keeps degenerate
/// (constant) dimensions from producing divisions by zero.
inline constexpr double kMinBandwidth = 1e-9;

/// Product of per-dimension normal densities N(0, s_i^2) evaluated at u,
/// in the log domain. Exact where the linear-domain value underflows.
double log_kernel_eval(std::span<const double> u, std::span<const double> bandwidth);

/// Linear-domain kernel value; exp of log_kernel_eval.
double kernel_eval(std::span<const double> u, std::span<const double> bandwidth);

/// One axis-aligned Gaussian component of the mixture.
struct Kernel {
  double weight = 0.0;
  Vec center;
  Vec bandwidth;               // per-dimension standard deviation, > 0
  std::uint64_t hit_count = 0; // reinforcement counter, see forget_decay
};

struct MixtureOptions {
  std::size_t budget = 500;            // max kernel count before merging
  double decay = 0.9999;               // forgetting factor applied per sample
  std::size_t bandwidth_interval = 50; // samples between bandwidth refits
};

/// Online, compressed, forgetting kernel density estimate.
///
/// The density is a weighted sum of axis-aligned Gaussian kernels. Weights
/// stay normalized to one after every public mutating call, and the kernel
/// count never exceeds the budget after an update.
///
/// Concurrency: mutating calls must be serialized by the caller. Const
/// calls are safe from multiple threads as long as no writer runs; take a
/// copy of the model when a stable snapshot is needed.
class MixtureModel {
 public:
  MixtureModel() = default;
  explicit MixtureModel(std::vector<std::string> names, MixtureOptions options = {});

  /// Builds a model from explicit kernels, validating the invariants
  /// (positive bandwidths, matching dimensions, unit weight sum).
  static MixtureModel from_kernels(std::vector<std::string> names, std::vector<Kernel> kernels,
                                   double bandwidth_scale = 1.0, std::uint64_t update_count = 0,
                                   MixtureOptions options = {});

  std::size_t dim() const { return names_.size(); }
  std::size_t size() const { return kernels_.size(); }
  bool empty() const { return kernels_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Kernel>& kernels() const { return kernels_; }
  const MixtureOptions& options() const { return options_; }
  double bandwidth_scale() const { return bandwidth_scale_; }
  std::uint64_t update_count() const { return update_count_; }
  const Vec& bandwidth_template() const { return bandwidth_template_; }
  double weight_sum() const;

  double log_density(std::span<const double> point) const;
  double density(std::span<const double> point) const;
  Vec mean() const;

  /// Model over the kept components only; exact for diagonal kernels.
  MixtureModel marginal(std::span<const std::size_t> keep) const;

  /// Model over the unknown components given values for the known ones.
  /// Weights are reweighted by each kernel's match to the known values and
  /// renormalized in the log domain, so queries far outside the training
  /// support still produce usable (extrapolating) weights.
  MixtureModel condition(std::span<const std::size_t> known,
                         std::span<const double> known_values) const;

  /// Normalized kernel weights of condition(); shared by the regression
  /// paths so the zero-order estimate and the conditional mean agree
  /// exactly. If log_mass is given it receives log sum_k a_k phi_k(known).
  Vec conditional_weights(std::span<const std::size_t> known,
                          std::span<const double> known_values,
                          double* log_mass = nullptr) const;

  /// Consumes one observation: appends a kernel at the sample, merges back
  /// down to the budget, applies forgetting, and refits the bandwidth on
  /// the configured schedule.
  void add_sample(std::span<const double> sample);

  /// Merges the pair of kernels with the smallest dissimilarity
  /// w_i*w_j/(w_i+w_j) * sum_d dc_d^2 / s_pooled_d^2 into one kernel that
  /// preserves the pair's total weight, mean, and per-dimension second
  /// moment exactly.
  void compress_merge();

  /// Multiplies all weights by the decay factor and moves the removed mass
  /// onto matched_kernel when given; drops kernels below 1e-6/m and
  /// renormalizes. No-op on an empty model.
  void forget_decay(std::optional<std::size_t> matched_kernel);

  /// Refits the shared bandwidth template s_i = h * sigma_i, with h chosen
  /// by golden-section search on the leave-one-out mixture log-likelihood
  /// over the kernel centers, and stamps it onto every kernel. Keeps the
  /// previous bandwidth when fewer than two kernels exist.
  void update_bandwidth();

  /// Draws one vector: kernel picked by weight, then per-dimension normal.
  Vec draw(std::mt19937_64& rng) const;

 private:
  struct MergeCache {
    bool valid = false;
    std::vector<double> best_cost;
    std::vector<int> best_to;
    std::vector<char> dirty;
  };

  void check_point(std::span<const double> point) const;
  double pair_cost(std::size_t i, std::size_t j) const;
  void cache_rebuild();
  void cache_recompute_row(std::size_t i);
  void cache_append_kernel();
  void cache_scale_costs(double factor);
  void normalize_weights();
  std::optional<std::size_t> nearest_within_gate(std::span<const double> sample) const;
  void refresh_template_from_kernels();

  std::vector<std::string> names_;
  std::vector<Kernel> kernels_;
  MixtureOptions options_;
  double bandwidth_scale_ = 1.0;
  std::uint64_t update_count_ = 0;
  Vec bandwidth_template_;
  MergeCache cache_;
};

}  // namespace assoc

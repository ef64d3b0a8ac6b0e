#include "assoc/associate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace assoc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_mask(const MixtureModel& model, const Mask& mask) {
  if (mask.size() != model.dim()) throw std::invalid_argument("mask dimension mismatch");
}

// Weighted mean of the kernels' unknown-component centers. Shared by the
// zero-order estimate and the slope-constrained fit so they agree exactly.
Vec weighted_unknown_mean(const MixtureModel& model, const Vec& weights,
                          const std::vector<std::size_t>& unknown) {
  Vec out(unknown.size(), 0.0);
  const auto& kernels = model.kernels();
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    for (std::size_t u = 0; u < unknown.size(); ++u) {
      out[u] += weights[k] * kernels[k].center[unknown[u]];
    }
  }
  return out;
}

}  // namespace

std::vector<std::size_t> Mask::known_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Mask::unknown_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i]) out.push_back(i);
  }
  return out;
}

Vec nw_estimate(const MixtureModel& model, const Mask& mask, std::span<const double> values) {
  check_mask(model, mask);
  const auto known = mask.known_indices();
  const auto unknown = mask.unknown_indices();
  if (unknown.empty()) throw std::invalid_argument("nw_estimate: no unknown components");
  Vec kv(known.size());
  for (std::size_t i = 0; i < known.size(); ++i) kv[i] = values[known[i]];
  const Vec w = model.conditional_weights(known, kv);
  return weighted_unknown_mean(model, w, unknown);
}

std::optional<LocalLinearFit> local_linear_fit(const MixtureModel& model, const Mask& mask,
                                               std::span<const double> values, double ridge,
                                               bool constrain_slope_zero) {
  check_mask(model, mask);
  if (ridge < 0.0) throw std::invalid_argument("local_linear_fit: negative ridge");
  const auto known = mask.known_indices();
  const auto unknown = mask.unknown_indices();
  if (known.empty()) throw std::invalid_argument("local_linear_fit: no known components");
  if (unknown.empty()) throw std::invalid_argument("local_linear_fit: no unknown components");

  Vec kv(known.size());
  for (std::size_t i = 0; i < known.size(); ++i) kv[i] = values[known[i]];
  double log_mass = -kInf;
  const Vec w = model.conditional_weights(known, kv, &log_mass);

  const std::size_t q = known.size();
  const std::size_t nu = unknown.size();
  const auto& kernels = model.kernels();

  LocalLinearFit fit;
  fit.weight_mass = std::exp(log_mass);
  fit.intercept.assign(nu, 0.0);
  fit.slope.assign(nu, Vec(q, 0.0));

  const Vec ybar = weighted_unknown_mean(model, w, unknown);
  if (constrain_slope_zero) {
    fit.intercept = ybar;
    return fit;
  }

  // Weighted mean of the known coordinates, then centered scatter and
  // cross-moments. Centering makes the ridge translation invariant and the
  // intercept recoverable as ybar - slope . mu.
  Vec mu(q, 0.0);
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    for (std::size_t a = 0; a < q; ++a) mu[a] += w[k] * kernels[k].center[known[a]];
  }
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(q, nu);
  Vec zc(q);
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    if (w[k] == 0.0) continue;
    for (std::size_t a = 0; a < q; ++a) zc[a] = kernels[k].center[known[a]] - mu[a];
    for (std::size_t a = 0; a < q; ++a) {
      const double wz = w[k] * zc[a];
      for (std::size_t b = 0; b < q; ++b) scatter(a, b) += wz * zc[b];
      for (std::size_t u = 0; u < nu; ++u) {
        cross(a, u) += wz * (kernels[k].center[unknown[u]] - ybar[u]);
      }
    }
  }

  const double trace = scatter.trace();
  if (!(trace > 1e-280)) {
    // Degenerate neighborhood (all effective centers coincide on the known
    // coordinates): slope zero, intercept equals the weighted mean.
    fit.intercept = ybar;
    return fit;
  }

  double factor = ridge;
  while (true) {
    const double lambda = factor * trace / static_cast<double>(q);
    Eigen::MatrixXd lhs = scatter;
    for (std::size_t a = 0; a < q; ++a) lhs(a, a) += lambda;
    Eigen::MatrixXd beta = lhs.ldlt().solve(cross);
    const double resid = (lhs * beta - cross).cwiseAbs().maxCoeff();
    const double scale = cross.cwiseAbs().maxCoeff() + trace + lambda;
    if (beta.allFinite() && resid <= 1e-8 * scale) {
      fit.ridge_used = factor;
      for (std::size_t u = 0; u < nu; ++u) {
        double dot = 0.0;
        for (std::size_t a = 0; a < q; ++a) {
          fit.slope[u][a] = beta(a, u);
          dot += beta(a, u) * mu[a];
        }
        fit.intercept[u] = ybar[u] - dot;
      }
      return fit;
    }
    factor = factor == 0.0 ? 1e-8 : factor * 10.0;
    if (factor > 1e-2) return std::nullopt;
  }
}

AssociateResult complete_only(const MixtureModel& model, std::span<const double> values,
                              const Mask& mask, int order, double ridge,
                              bool allow_all_unknown) {
  check_mask(model, mask);
  if (model.empty()) throw std::logic_error("associate: empty model");
  if (values.size() != model.dim()) throw std::invalid_argument("associate: values size mismatch");
  if (order != 0 && order != 1) throw std::invalid_argument("associate: order must be 0 or 1");

  const auto known = mask.known_indices();
  const auto unknown = mask.unknown_indices();
  for (std::size_t i : known) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("associate: non-finite known component");
    }
  }

  AssociateResult res;
  res.completed.assign(values.begin(), values.end());
  res.order = order;

  if (unknown.empty()) return res;  // recognition: nothing to fill

  if (known.empty()) {
    if (!allow_all_unknown) {
      throw std::invalid_argument("associate: all components unknown (enable the explicit opt-in)");
    }
    const Vec mu = model.mean();
    for (std::size_t i = 0; i < model.dim(); ++i) res.completed[i] = mu[i];
    res.order = 0;
    return res;
  }

  if (order == 1) {
    auto fit = local_linear_fit(model, mask, values, ridge);
    if (fit) {
      for (std::size_t u = 0; u < unknown.size(); ++u) {
        double y = fit->intercept[u];
        for (std::size_t a = 0; a < known.size(); ++a) {
          y += fit->slope[u][a] * values[known[a]];
        }
        res.completed[unknown[u]] = y;
      }
      res.fit = std::move(fit);
      return res;
    }
    res.order = 0;  // singular system; fall back to the zero-order estimate
  }

  const Vec y = nw_estimate(model, mask, values);
  for (std::size_t u = 0; u < unknown.size(); ++u) res.completed[unknown[u]] = y[u];
  return res;
}

PlausibilityRef::PlausibilityRef(const MixtureModel& model, int mc_samples, std::uint64_t seed) {
  if (model.empty()) throw std::logic_error("plausibility: empty model");
  if (mc_samples < 1) throw std::invalid_argument("plausibility: mc_samples must be positive");
  std::mt19937_64 rng(seed);
  sorted_log_densities_.reserve(static_cast<std::size_t>(mc_samples));
  for (int i = 0; i < mc_samples; ++i) {
    const Vec x = model.draw(rng);
    sorted_log_densities_.push_back(model.log_density(x));
  }
  std::sort(sorted_log_densities_.begin(), sorted_log_densities_.end());
}

double PlausibilityRef::rank_log_density(double point_log_density) const {
  const auto it = std::upper_bound(sorted_log_densities_.begin(), sorted_log_densities_.end(),
                                   point_log_density);
  return static_cast<double>(it - sorted_log_densities_.begin()) /
         static_cast<double>(sorted_log_densities_.size());
}

double PlausibilityRef::plausibility(const MixtureModel& model,
                                     std::span<const double> point) const {
  return rank_log_density(model.log_density(point));
}

double plausibility(const MixtureModel& model, std::span<const double> point, int mc_samples,
                    std::uint64_t seed) {
  PlausibilityRef ref(model, mc_samples, seed);
  return ref.plausibility(model, point);
}

AssociateResult associate(const MixtureModel& model, std::span<const double> values,
                          const Mask& mask, const AssociateOptions& opts) {
  AssociateResult res =
      complete_only(model, values, mask, opts.order, opts.ridge, opts.allow_all_unknown);
  if (opts.plaus_ref) {
    res.plausibility = opts.plaus_ref->plausibility(model, res.completed);
  } else {
    res.plausibility = plausibility(model, res.completed, opts.mc_samples, opts.seed);
  }
  return res;
}

std::vector<CorruptFinding> detect_corrupt(const MixtureModel& model,
                                           std::span<const double> values, double threshold,
                                           const AssociateOptions& opts) {
  if (model.empty()) throw std::logic_error("detect_corrupt: empty model");
  if (values.size() != model.dim()) throw std::invalid_argument("detect_corrupt: size mismatch");

  const PlausibilityRef* ref = opts.plaus_ref;
  std::optional<PlausibilityRef> own;
  if (!ref) {
    own.emplace(model, opts.mc_samples, opts.seed);
    ref = &*own;
  }
  const double base = ref->plausibility(model, values);

  std::vector<CorruptFinding> findings;
  for (std::size_t i = 0; i < model.dim(); ++i) {
    Mask m = Mask::all_known(model.dim());
    m.flags[i] = 0;
    const AssociateResult r =
        complete_only(model, values, m, opts.order, opts.ridge, opts.allow_all_unknown);
    const double gain = ref->plausibility(model, r.completed) - base;
    if (gain > threshold) findings.push_back({i, gain});
  }
  std::stable_sort(findings.begin(), findings.end(),
                   [](const CorruptFinding& a, const CorruptFinding& b) {
                     return a.plausibility_gain > b.plausibility_gain;
                   });
  return findings;
}

ClassifyResult classify(const MixtureModel& model, std::span<const double> pattern,
                        std::size_t class_count, const AssociateOptions& opts) {
  if (class_count > model.dim()) throw std::invalid_argument("classify: class count exceeds dim");
  const std::size_t dm = model.dim() - class_count;
  if (pattern.size() != dm) throw std::invalid_argument("classify: pattern dimension mismatch");

  Vec values(model.dim(), 0.0);
  Mask mask(std::vector<std::uint8_t>(model.dim(), 0));
  for (std::size_t i = 0; i < dm; ++i) {
    values[i] = pattern[i];
    mask.flags[i] = 1;
  }

  ClassifyResult out;
  if (class_count == 0) {
    // Pure recognition: the pattern is the whole vector.
    AssociateOptions o = opts;
    o.order = 0;
    const AssociateResult r = associate(model, values, Mask::all_known(dm), o);
    out.plausibility = r.plausibility;
    return out;
  }

  AssociateOptions o = opts;
  o.order = 0;  // the class block is a weight average by construction
  const AssociateResult r = associate(model, values, mask, o);
  out.scores.assign(r.completed.begin() + static_cast<std::ptrdiff_t>(dm), r.completed.end());
  out.plausibility = r.plausibility;
  out.label = 0;
  for (std::size_t c = 1; c < class_count; ++c) {
    if (out.scores[c] > out.scores[out.label]) out.label = c;
  }
  return out;
}

}  // namespace assoc

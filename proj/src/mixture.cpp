#include "assoc/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace assoc {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))
constexpr double kInf = std::numeric_limits<double>::infinity();

double logsumexp(std::span<const double> vals) {
  double mx = -kInf;
  for (double v : vals) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : vals) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace

double log_kernel_eval(std::span<const double> u, std::span<const double> bandwidth) {
  if (u.size() != bandwidth.size()) {
    throw std::invalid_argument("log_kernel_eval: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double s = bandwidth[i];
    if (!(s > 0.0)) throw std::invalid_argument("log_kernel_eval: nonpositive bandwidth");
    const double z = u[i] / s;
    acc += -kLogSqrt2Pi - std::log(s) - 0.5 * z * z;
  }
  return acc;
}

double kernel_eval(std::span<const double> u, std::span<const double> bandwidth) {
  return std::exp(log_kernel_eval(u, bandwidth));
}

MixtureModel::MixtureModel(std::vector<std::string> names, MixtureOptions options)
    : names_(std::move(names)), options_(options) {
  if (names_.empty()) throw std::invalid_argument("MixtureModel: dimension must be positive");
  if (options_.budget == 0) throw std::invalid_argument("MixtureModel: budget must be positive");
  if (!(options_.decay > 0.0) || options_.decay > 1.0) {
    throw std::invalid_argument("MixtureModel: decay must be in (0, 1]");
  }
  if (options_.bandwidth_interval == 0) {
    throw std::invalid_argument("MixtureModel: bandwidth interval must be positive");
  }
  bandwidth_template_.assign(names_.size(), 1.0);
}

MixtureModel MixtureModel::from_kernels(std::vector<std::string> names, std::vector<Kernel> kernels,
                                        double bandwidth_scale, std::uint64_t update_count,
                                        MixtureOptions options) {
  MixtureModel m(std::move(names), options);
  const std::size_t d = m.dim();
  double sum = 0.0;
  for (const Kernel& k : kernels) {
    if (k.center.size() != d || k.bandwidth.size() != d) {
      throw std::invalid_argument("from_kernels: kernel dimension mismatch");
    }
    if (!(k.weight >= 0.0) || !std::isfinite(k.weight)) {
      throw std::invalid_argument("from_kernels: invalid kernel weight");
    }
    for (std::size_t i = 0; i < d; ++i) {
      if (!(k.bandwidth[i] > 0.0) || !std::isfinite(k.bandwidth[i]) || !std::isfinite(k.center[i])) {
        throw std::invalid_argument("from_kernels: invalid kernel parameters");
      }
    }
    sum += k.weight;
  }
  if (!kernels.empty() && std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("from_kernels: kernel weights must sum to one");
  }
  if (!(bandwidth_scale > 0.0) || !std::isfinite(bandwidth_scale)) {
    throw std::invalid_argument("from_kernels: invalid bandwidth scale");
  }
  m.kernels_ = std::move(kernels);
  m.bandwidth_scale_ = bandwidth_scale;
  m.update_count_ = update_count;
  m.refresh_template_from_kernels();
  return m;
}

double MixtureModel::weight_sum() const {
  double s = 0.0;
  for (const Kernel& k : kernels_) s += k.weight;
  return s;
}

void MixtureModel::check_point(std::span<const double> point) const {
  if (point.size() != dim()) throw std::invalid_argument("MixtureModel: point dimension mismatch");
}

double MixtureModel::log_density(std::span<const double> point) const {
  check_point(point);
  if (empty()) throw std::logic_error("MixtureModel: density of an empty model");
  Vec lw(kernels_.size());
  Vec diff(dim());
  for (std::size_t k = 0; k < kernels_.size(); ++k) {
    const Kernel& kn = kernels_[k];
    for (std::size_t i = 0; i < dim(); ++i) diff[i] = point[i] - kn.center[i];
    lw[k] = (kn.weight > 0.0 ? std::log(kn.weight) : -kInf) + log_kernel_eval(diff, kn.bandwidth);
  }
  return logsumexp(lw);
}

double MixtureModel::density(std::span<const double> point) const {
  return std::exp(log_density(point));
}

Vec MixtureModel::mean() const {
  if (empty()) throw std::logic_error("MixtureModel: mean of an empty model");
  Vec mu(dim(), 0.0);
  for (const Kernel& k : kernels_) {
    for (std::size_t i = 0; i < dim(); ++i) mu[i] += k.weight * k.center[i];
  }
  return mu;
}

MixtureModel MixtureModel::marginal(std::span<const std::size_t> keep) const {
  if (keep.empty()) throw std::invalid_argument("marginal: empty keep set");
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] >= dim()) throw std::invalid_argument("marginal: index out of range");
    if (i > 0 && keep[i] <= keep[i - 1]) {
      throw std::invalid_argument("marginal: indices must be strictly increasing");
    }
  }
  std::vector<std::string> names;
  names.reserve(keep.size());
  for (std::size_t i : keep) names.push_back(names_[i]);

  std::vector<Kernel> ks;
  ks.reserve(kernels_.size());
  for (const Kernel& k : kernels_) {
    Kernel r;
    r.weight = k.weight;
    r.hit_count = k.hit_count;
    r.center.reserve(keep.size());
    r.bandwidth.reserve(keep.size());
    for (std::size_t i : keep) {
      r.center.push_back(k.center[i]);
      r.bandwidth.push_back(k.bandwidth[i]);
    }
    ks.push_back(std::move(r));
  }
  MixtureModel m(std::move(names), options_);
  m.kernels_ = std::move(ks);
  m.bandwidth_scale_ = bandwidth_scale_;
  m.update_count_ = update_count_;
  m.refresh_template_from_kernels();
  return m;
}

Vec MixtureModel::conditional_weights(std::span<const std::size_t> known,
                                      std::span<const double> known_values,
                                      double* log_mass) const {
  if (empty()) throw std::logic_error("conditional_weights: empty model");
  if (known.empty()) throw std::invalid_argument("conditional_weights: no known components");
  if (known.size() != known_values.size()) {
    throw std::invalid_argument("conditional_weights: values/index size mismatch");
  }
  for (std::size_t i = 0; i < known.size(); ++i) {
    if (known[i] >= dim()) throw std::invalid_argument("conditional_weights: index out of range");
    if (i > 0 && known[i] <= known[i - 1]) {
      throw std::invalid_argument("conditional_weights: indices must be strictly increasing");
    }
  }

  const std::size_t m = kernels_.size();
  Vec lw(m);
  for (std::size_t k = 0; k < m; ++k) {
    const Kernel& kn = kernels_[k];
    double acc = kn.weight > 0.0 ? std::log(kn.weight) : -kInf;
    for (std::size_t i = 0; i < known.size(); ++i) {
      const double s = kn.bandwidth[known[i]];
      const double z = (known_values[i] - kn.center[known[i]]) / s;
      acc += -kLogSqrt2Pi - std::log(s) - 0.5 * z * z;
    }
    lw[k] = acc;
  }
  double mx = -kInf;
  for (double v : lw) mx = std::max(mx, v);
  Vec w(m, 0.0);
  double sum = 0.0;
  if (std::isfinite(mx)) {
    for (std::size_t k = 0; k < m; ++k) {
      w[k] = std::exp(lw[k] - mx);
      sum += w[k];
    }
    for (double& v : w) v /= sum;
  } else {
    // All kernels carry zero weight on the known slice; fall back to the
    // prior weights so the caller still gets a usable distribution.
    for (std::size_t k = 0; k < m; ++k) w[k] = kernels_[k].weight;
    sum = 1.0;
  }
  if (log_mass) *log_mass = std::isfinite(mx) ? mx + std::log(sum) : -kInf;
  return w;
}

MixtureModel MixtureModel::condition(std::span<const std::size_t> known,
                                     std::span<const double> known_values) const {
  if (known.size() >= dim()) throw std::invalid_argument("condition: nothing left to condition onto");
  const Vec w = conditional_weights(known, known_values);

  std::vector<std::size_t> unknown;
  unknown.reserve(dim() - known.size());
  for (std::size_t i = 0, j = 0; i < dim(); ++i) {
    if (j < known.size() && known[j] == i) {
      ++j;
    } else {
      unknown.push_back(i);
    }
  }

  std::vector<std::string> names;
  names.reserve(unknown.size());
  for (std::size_t i : unknown) names.push_back(names_[i]);

  std::vector<Kernel> ks;
  ks.reserve(kernels_.size());
  for (std::size_t k = 0; k < kernels_.size(); ++k) {
    Kernel r;
    r.weight = w[k];
    r.hit_count = kernels_[k].hit_count;
    r.center.reserve(unknown.size());
    r.bandwidth.reserve(unknown.size());
    for (std::size_t i : unknown) {
      r.center.push_back(kernels_[k].center[i]);
      r.bandwidth.push_back(kernels_[k].bandwidth[i]);
    }
    ks.push_back(std::move(r));
  }
  MixtureModel m(std::move(names), options_);
  m.kernels_ = std::move(ks);
  m.bandwidth_scale_ = bandwidth_scale_;
  m.update_count_ = update_count_;
  m.refresh_template_from_kernels();
  return m;
}

// Dissimilarity of a kernel pair: squared center distance per dimension over
// the pooled variance, times the reduced weight w_i*w_j/(w_i+w_j). The
// (w_i+w_j) factors cancel into cost = w_i*w_j * sum_d dc^2/(w_i s_i^2 + w_j s_j^2).
double MixtureModel::pair_cost(std::size_t i, std::size_t j) const {
  const Kernel& a = kernels_[i];
  const Kernel& b = kernels_[j];
  double acc = 0.0;
  for (std::size_t d = 0; d < dim(); ++d) {
    const double dc = a.center[d] - b.center[d];
    const double denom = a.weight * a.bandwidth[d] * a.bandwidth[d] +
                         b.weight * b.bandwidth[d] * b.bandwidth[d];
    acc += dc * dc / std::max(denom, 1e-300);
  }
  return a.weight * b.weight * acc;
}

void MixtureModel::cache_rebuild() {
  const std::size_t m = kernels_.size();
  cache_.best_cost.assign(m, kInf);
  cache_.best_to.assign(m, -1);
  cache_.dirty.assign(m, 0);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double c = pair_cost(i, j);
      if (c < cache_.best_cost[i]) {
        cache_.best_cost[i] = c;
        cache_.best_to[i] = static_cast<int>(j);
      }
      if (c < cache_.best_cost[j]) {
        cache_.best_cost[j] = c;
        cache_.best_to[j] = static_cast<int>(i);
      }
    }
  }
  cache_.valid = true;
}

void MixtureModel::cache_recompute_row(std::size_t i) {
  const std::size_t m = kernels_.size();
  cache_.best_cost[i] = kInf;
  cache_.best_to[i] = -1;
  for (std::size_t j = 0; j < m; ++j) {
    if (j == i) continue;
    const double c = pair_cost(i, j);
    if (c < cache_.best_cost[i]) {
      cache_.best_cost[i] = c;
      cache_.best_to[i] = static_cast<int>(j);
    }
  }
  cache_.dirty[i] = 0;
}

void MixtureModel::cache_append_kernel() {
  if (!cache_.valid) return;
  const std::size_t idx = kernels_.size() - 1;
  cache_.best_cost.push_back(kInf);
  cache_.best_to.push_back(-1);
  cache_.dirty.push_back(0);
  for (std::size_t i = 0; i < idx; ++i) {
    const double c = pair_cost(i, idx);
    if (c < cache_.best_cost[idx]) {
      cache_.best_cost[idx] = c;
      cache_.best_to[idx] = static_cast<int>(i);
    }
    if (!cache_.dirty[i] && c < cache_.best_cost[i]) {
      cache_.best_cost[i] = c;
      cache_.best_to[i] = static_cast<int>(idx);
    }
  }
}

void MixtureModel::cache_scale_costs(double factor) {
  if (!cache_.valid) return;
  for (double& c : cache_.best_cost) c *= factor;
}

void MixtureModel::normalize_weights() {
  double s = weight_sum();
  if (!(s > 0.0)) throw std::logic_error("MixtureModel: total weight collapsed to zero");
  if (s == 1.0) return;
  for (Kernel& k : kernels_) k.weight /= s;
  cache_scale_costs(1.0 / s);
}

void MixtureModel::compress_merge() {
  const std::size_t m = kernels_.size();
  if (m < 2) throw std::logic_error("compress_merge: need at least two kernels");
  if (!cache_.valid) {
    cache_rebuild();
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      if (cache_.dirty[i]) cache_recompute_row(i);
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < m; ++i) {
    if (cache_.best_cost[i] < cache_.best_cost[best]) best = i;
  }
  std::size_t a = best;
  std::size_t b = static_cast<std::size_t>(cache_.best_to[best]);
  if (a > b) std::swap(a, b);

  Kernel& ka = kernels_[a];
  Kernel& kb = kernels_[b];
  const double w = ka.weight + kb.weight;
  Kernel merged;
  merged.weight = w;
  merged.hit_count = ka.hit_count + kb.hit_count;
  merged.center.resize(dim());
  merged.bandwidth.resize(dim());
  const double wa = w > 0.0 ? ka.weight / w : 0.5;
  const double wb = w > 0.0 ? kb.weight / w : 0.5;
  for (std::size_t d = 0; d < dim(); ++d) {
    const double c = wa * ka.center[d] + wb * kb.center[d];
    const double dc = ka.center[d] - kb.center[d];
    // Cancellation-free moment match: pooled variance plus spread term.
    double var = wa * ka.bandwidth[d] * ka.bandwidth[d] +
                 wb * kb.bandwidth[d] * kb.bandwidth[d] + wa * wb * dc * dc;
    merged.center[d] = c;
    merged.bandwidth[d] = std::sqrt(std::max(var, kMinBandwidth * kMinBandwidth));
  }

  const std::size_t last = m - 1;
  kernels_[a] = std::move(merged);
  if (b != last) kernels_[b] = std::move(kernels_[last]);
  kernels_.pop_back();

  // Cache fixups: slide the moved row into slot b, retarget references to
  // the moved index, and mark rows whose partner was merged away.
  if (b != last) {
    cache_.best_cost[b] = cache_.best_cost[last];
    cache_.best_to[b] = cache_.best_to[last];
    cache_.dirty[b] = cache_.dirty[last];
  }
  cache_.best_cost.pop_back();
  cache_.best_to.pop_back();
  cache_.dirty.pop_back();
  const int ia = static_cast<int>(a);
  const int ib = static_cast<int>(b);
  const int ilast = static_cast<int>(last);
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const int to = cache_.best_to[i];
    if (to == ia || to == ib) {
      cache_.dirty[i] = 1;
    } else if (to == ilast) {
      cache_.best_to[i] = ib;
    }
  }
  // Fresh row for the merged kernel, relaxing neighbors against it.
  cache_.best_cost[a] = kInf;
  cache_.best_to[a] = -1;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    if (i == a) continue;
    const double c = pair_cost(i, a);
    if (c < cache_.best_cost[a]) {
      cache_.best_cost[a] = c;
      cache_.best_to[a] = static_cast<int>(i);
    }
    if (!cache_.dirty[i] && c < cache_.best_cost[i]) {
      cache_.best_cost[i] = c;
      cache_.best_to[i] = ia;
    }
  }
  cache_.dirty[a] = 0;

  normalize_weights();
}

void MixtureModel::forget_decay(std::optional<std::size_t> matched_kernel) {
  if (empty()) return;
  if (matched_kernel && *matched_kernel >= kernels_.size()) {
    throw std::invalid_argument("forget_decay: matched kernel out of range");
  }
  const double decay = options_.decay;
  const double total = weight_sum();
  if (decay < 1.0) {
    for (Kernel& k : kernels_) k.weight *= decay;
    cache_scale_costs(decay);
    if (matched_kernel) {
      kernels_[*matched_kernel].weight += (1.0 - decay) * total;
    }
  }
  if (matched_kernel) {
    kernels_[*matched_kernel].hit_count += 1;
    if (cache_.valid && decay < 1.0) {
      const int im = static_cast<int>(*matched_kernel);
      cache_.dirty[*matched_kernel] = 1;
      for (std::size_t i = 0; i < kernels_.size(); ++i) {
        if (cache_.best_to[i] == im) cache_.dirty[i] = 1;
      }
    }
  }

  const double floor = 1e-6 / static_cast<double>(kernels_.size());
  bool dropped = false;
  for (std::size_t i = kernels_.size(); i-- > 0;) {
    if (kernels_[i].weight < floor) {
      kernels_[i] = std::move(kernels_.back());
      kernels_.pop_back();
      dropped = true;
    }
  }
  if (dropped) cache_.valid = false;
  normalize_weights();
}

std::optional<std::size_t> MixtureModel::nearest_within_gate(std::span<const double> sample) const {
  double best = kInf;
  std::size_t best_idx = 0;
  for (std::size_t k = 0; k < kernels_.size(); ++k) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) {
      const double z = (sample[i] - kernels_[k].center[i]) / bandwidth_template_[i];
      d2 += z * z;
    }
    if (d2 < best) {
      best = d2;
      best_idx = k;
    }
  }
  if (best < 9.0) return best_idx;  // Mahalanobis gate of 3 under the template
  return std::nullopt;
}

void MixtureModel::add_sample(std::span<const double> sample) {
  check_point(sample);
  for (double v : sample) {
    if (!std::isfinite(v)) throw std::invalid_argument("add_sample: non-finite sample value");
  }
  const double n = static_cast<double>(update_count_);
  const double scale = n / (n + 1.0);
  for (Kernel& k : kernels_) k.weight *= scale;
  cache_scale_costs(scale);

  Kernel fresh;
  fresh.weight = 1.0 / (n + 1.0);
  fresh.center.assign(sample.begin(), sample.end());
  fresh.bandwidth = bandwidth_template_;
  kernels_.push_back(std::move(fresh));
  cache_append_kernel();
  ++update_count_;

  while (kernels_.size() > options_.budget) compress_merge();

  forget_decay(nearest_within_gate(sample));

  if (update_count_ % options_.bandwidth_interval == 0 && kernels_.size() >= 2) {
    update_bandwidth();
  }
  normalize_weights();
}

void MixtureModel::update_bandwidth() {
  const std::size_t m = kernels_.size();
  if (m < 2) return;
  const std::size_t d = dim();

  Vec mu(d, 0.0);
  for (const Kernel& k : kernels_) {
    for (std::size_t i = 0; i < d; ++i) mu[i] += k.weight * k.center[i];
  }
  Vec sigma(d, 0.0);
  for (const Kernel& k : kernels_) {
    for (std::size_t i = 0; i < d; ++i) {
      const double dc = k.center[i] - mu[i];
      sigma[i] += k.weight * dc * dc;
    }
  }
  double log_sigma_sum = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    sigma[i] = std::max(std::sqrt(sigma[i]), kMinBandwidth);
    log_sigma_sum += std::log(sigma[i]);
  }

  // Scaled squared distances between centers; fixed across the h search.
  std::vector<double> dist2(m * m, 0.0);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    for (std::size_t k = j + 1; k < m; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double dc = (kernels_[j].center[i] - kernels_[k].center[i]) / sigma[i];
        acc += dc * dc;
      }
      dist2[j * m + k] = acc;
      dist2[k * m + j] = acc;
    }
  }
  Vec log_w(m);
  for (std::size_t k = 0; k < m; ++k) {
    log_w[k] = kernels_[k].weight > 0.0 ? std::log(kernels_[k].weight) : -kInf;
  }

  Vec row(m);
  const double dd = static_cast<double>(d);
  auto loo_loglik = [&](double h) {
    const double inv2h2 = 1.0 / (2.0 * h * h);
    const double log_norm = -log_sigma_sum - dd * std::log(h) - dd * kLogSqrt2Pi;
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double wj = kernels_[j].weight;
      if (!(wj > 0.0) || 1.0 - wj < 1e-12) continue;
      double mx = -kInf;
      const double* dj = dist2.data() + j * m;
      for (std::size_t k = 0; k < m; ++k) {
        if (k == j) {
          row[k] = -kInf;
          continue;
        }
        row[k] = log_w[k] - dj[k] * inv2h2;
        if (row[k] > mx) mx = row[k];
      }
      if (!std::isfinite(mx)) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double a = row[k] - mx;
        if (a > -40.0) s += std::exp(a);
      }
      total += wj * (mx + std::log(s) - std::log1p(-wj) + log_norm);
    }
    return total;
  };

  // Golden-section maximization of the leave-one-out likelihood.
  const double gr = 0.6180339887498949;
  double a = 0.05, b = 5.0;
  double x1 = b - gr * (b - a);
  double x2 = a + gr * (b - a);
  double f1 = loo_loglik(x1);
  double f2 = loo_loglik(x2);
  while (b - a > 1e-3 * 0.5 * (a + b)) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = loo_loglik(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = loo_loglik(x1);
    }
  }
  bandwidth_scale_ = 0.5 * (a + b);

  for (std::size_t i = 0; i < d; ++i) {
    bandwidth_template_[i] = std::max(bandwidth_scale_ * sigma[i], kMinBandwidth);
  }
  for (Kernel& k : kernels_) k.bandwidth = bandwidth_template_;
  cache_.valid = false;
}

Vec MixtureModel::draw(std::mt19937_64& rng) const {
  if (empty()) throw std::logic_error("draw: empty model");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u = uni(rng);
  double cum = 0.0;
  std::size_t pick = kernels_.size() - 1;
  for (std::size_t k = 0; k < kernels_.size(); ++k) {
    cum += kernels_[k].weight;
    if (u < cum) {
      pick = k;
      break;
    }
  }
  const Kernel& kn = kernels_[pick];
  Vec out(dim());
  std::normal_distribution<double> norm(0.0, 1.0);
  for (std::size_t i = 0; i < dim(); ++i) {
    out[i] = kn.center[i] + kn.bandwidth[i] * norm(rng);
  }
  return out;
}

void MixtureModel::refresh_template_from_kernels() {
  const std::size_t d = dim();
  if (kernels_.size() >= 2) {
    Vec mu(d, 0.0);
    for (const Kernel& k : kernels_) {
      for (std::size_t i = 0; i < d; ++i) mu[i] += k.weight * k.center[i];
    }
    bandwidth_template_.assign(d, 0.0);
    for (const Kernel& k : kernels_) {
      for (std::size_t i = 0; i < d; ++i) {
        const double dc = k.center[i] - mu[i];
        bandwidth_template_[i] += k.weight * dc * dc;
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      bandwidth_template_[i] =
          std::max(bandwidth_scale_ * std::max(std::sqrt(bandwidth_template_[i]), kMinBandwidth),
                   kMinBandwidth);
    }
  } else if (kernels_.size() == 1) {
    bandwidth_template_ = kernels_[0].bandwidth;
  } else {
    bandwidth_template_.assign(d, 1.0);
  }
  cache_.valid = false;
}

}  // namespace assoc

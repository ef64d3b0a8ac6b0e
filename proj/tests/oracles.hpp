#pragma once

// Test-side reference computations, kept independent of the library's
// arithmetic paths: direct linear-domain sums, trapezoid quadrature,
// closed-form moments, and a pivoted Gaussian-elimination least squares.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "assoc/mixture.hpp"

namespace oracle {

inline double normal_pdf(double u, double s) {
  static const double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi / s * std::exp(-0.5 * (u / s) * (u / s));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Plain linear-domain mixture density, no log-sum-exp.
inline double direct_density(const assoc::MixtureModel& m, std::span<const double> pt) {
  double total = 0.0;
  for (const assoc::Kernel& k : m.kernels()) {
    double prod = k.weight;
    for (std::size_t i = 0; i < pt.size(); ++i) {
      prod *= normal_pdf(pt[i] - k.center[i], k.bandwidth[i]);
    }
    total += prod;
  }
  return total;
}

inline double trapezoid(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double acc = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) acc += f(a + i * h);
  return acc * h;
}

inline assoc::Vec mixture_mean(const assoc::MixtureModel& m) {
  assoc::Vec mu(m.dim(), 0.0);
  for (const assoc::Kernel& k : m.kernels()) {
    for (std::size_t i = 0; i < m.dim(); ++i) mu[i] += k.weight * k.center[i];
  }
  return mu;
}

// Raw (uncentered) per-dimension second moment of the mixture.
inline assoc::Vec mixture_second_moment(const assoc::MixtureModel& m) {
  assoc::Vec m2(m.dim(), 0.0);
  for (const assoc::Kernel& k : m.kernels()) {
    for (std::size_t i = 0; i < m.dim(); ++i) {
      m2[i] += k.weight * (k.bandwidth[i] * k.bandwidth[i] + k.center[i] * k.center[i]);
    }
  }
  return m2;
}

inline std::vector<std::string> component_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back("c" + std::to_string(i));
  return names;
}

inline assoc::MixtureModel random_model(std::mt19937_64& rng, std::size_t m, std::size_t d,
                                        double center_span = 3.0,
                                        assoc::MixtureOptions opts = {}) {
  std::uniform_real_distribution<double> uc(-center_span, center_span);
  std::uniform_real_distribution<double> us(0.3, 2.0);
  std::uniform_real_distribution<double> uw(0.1, 1.0);
  std::vector<assoc::Kernel> ks(m);
  double sum = 0.0;
  for (auto& k : ks) {
    k.weight = uw(rng);
    sum += k.weight;
    k.center.resize(d);
    k.bandwidth.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      k.center[i] = uc(rng);
      k.bandwidth[i] = us(rng);
    }
  }
  for (auto& k : ks) k.weight /= sum;
  return assoc::MixtureModel::from_kernels(component_names(d), std::move(ks), 1.0, m, opts);
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Least squares via normal equations and pivoted Gaussian elimination;
// columns of X are predictors (include a ones column for an intercept).
inline assoc::Vec least_squares(const std::vector<assoc::Vec>& x_rows,
                                std::span<const double> y,
                                std::span<const double> row_weights = {}) {
  const std::size_t n = x_rows.size();
  const std::size_t p = x_rows.front().size();
  std::vector<assoc::Vec> a(p, assoc::Vec(p + 1, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    const double w = row_weights.empty() ? 1.0 : row_weights[r];
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += w * x_rows[r][i] * x_rows[r][j];
      a[i][p] += w * x_rows[r][i] * y[r];
    }
  }
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-30) throw std::runtime_error("oracle: singular least squares");
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t j = col; j <= p; ++j) a[r][j] -= f * a[col][j];
    }
  }
  assoc::Vec beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

}  // namespace oracle

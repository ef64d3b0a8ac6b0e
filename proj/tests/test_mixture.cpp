#include <doctest.h>

#include <cmath>
#include <random>

#include "assoc/mixture.hpp"
#include "oracles.hpp"

using assoc::Kernel;
using assoc::MixtureModel;
using assoc::MixtureOptions;
using assoc::Vec;

namespace {

MixtureModel two_kernel_model(Vec c0, Vec c1, double s = 1.0) {
  const std::size_t d = c0.size();
  Kernel a{0.5, std::move(c0), Vec(d, s)};
  Kernel b{0.5, std::move(c1), Vec(d, s)};
  return MixtureModel::from_kernels(oracle::component_names(d), {a, b}, 1.0, 2);
}

}  // namespace

TEST_CASE("kernel_eval matches the normal product") {
  CHECK(assoc::kernel_eval(Vec{0.0}, Vec{1.0}) == doctest::Approx(0.3989422804).epsilon(1e-9));
  CHECK(assoc::kernel_eval(Vec{1.0}, Vec{1.0}) == doctest::Approx(0.2419707245).epsilon(1e-9));
  // product of two 1-D values = 1/(2*pi*2)
  CHECK(assoc::kernel_eval(Vec{0.0, 0.0}, Vec{1.0, 2.0}) ==
        doctest::Approx(0.0795774715).epsilon(1e-9));
  CHECK_THROWS_AS((void)assoc::kernel_eval(Vec{0.0}, Vec{1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS((void)assoc::kernel_eval(Vec{0.0}, Vec{-1.0}), std::invalid_argument);

  // log variant stays exact where the linear value underflows
  const double ld = assoc::log_kernel_eval(Vec{60.0}, Vec{1.0});
  CHECK(std::isfinite(ld));
  CHECK(ld == doctest::Approx(-0.5 * 3600 - 0.9189385332046727).epsilon(1e-12));
  CHECK(assoc::kernel_eval(Vec{60.0}, Vec{1.0}) == 0.0);  // underflow in linear domain
}

TEST_CASE("density reduces to kernel_eval and matches the direct sum") {
  Kernel k{1.0, Vec{0.0}, Vec{1.0}};
  const auto single = MixtureModel::from_kernels({"x"}, {k}, 1.0, 1);
  CHECK(single.density(Vec{0.0}) == doctest::Approx(0.3989422804).epsilon(1e-9));

  const auto two = two_kernel_model(Vec{-1.0}, Vec{1.0});
  CHECK(two.density(Vec{0.0}) == doctest::Approx(0.2419707245).epsilon(1e-9));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> up(-6.0, 6.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = oracle::random_model(rng, 1 + trial % 6, 1 + trial % 3);
    Vec pt(m.dim());
    for (auto& v : pt) v = up(rng);
    const double expect = oracle::direct_density(m, pt);
    CHECK(m.density(pt) == doctest::Approx(expect).epsilon(1e-12));
    // log-domain consistency
    CHECK(std::exp(m.log_density(pt)) == doctest::Approx(m.density(pt)).epsilon(1e-12));
  }

  const MixtureModel empty(oracle::component_names(2));
  CHECK_THROWS_AS((void)empty.density(Vec{0.0, 0.0}), std::logic_error);
}

TEST_CASE("density stays finite in the log domain far from all kernels") {
  const auto m = two_kernel_model(Vec{0.0, 0.0}, Vec{1.0, 1.0});
  const double ld = m.log_density(Vec{500.0, -500.0});
  CHECK(std::isfinite(ld));
  CHECK(m.density(Vec{500.0, -500.0}) == 0.0);
}

TEST_CASE("marginal restricts kernels and matches trapezoid integration") {
  Kernel k{1.0, Vec{1.0, 2.0}, Vec{3.0, 4.0}};
  const auto m = MixtureModel::from_kernels({"x", "y"}, {k}, 1.0, 1);

  const std::size_t keep_all[] = {0, 1};
  const auto same = m.marginal(keep_all);
  CHECK(same.dim() == 2);
  CHECK(same.kernels()[0].center == Vec{1.0, 2.0});

  const std::size_t keep0[] = {0};
  const auto mx = m.marginal(keep0);
  CHECK(mx.dim() == 1);
  CHECK(mx.kernels()[0].center == Vec{1.0});
  CHECK(mx.kernels()[0].bandwidth == Vec{3.0});
  CHECK(mx.names() == std::vector<std::string>{"x"});

  CHECK_THROWS_AS((void)m.marginal({}), std::invalid_argument);

  // integral oracle over the dropped axis, 2-D and 3-D random mixtures
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t d = 2 + trial % 2;
    const auto model = oracle::random_model(rng, 2 + trial % 4, d);
    const std::size_t drop = trial % d;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < d; ++i) {
      if (i != drop) keep.push_back(i);
    }
    const auto marg = model.marginal(keep);

    std::uniform_real_distribution<double> up(-3.0, 3.0);
    for (int q = 0; q < 5; ++q) {
      Vec kept_pt(keep.size());
      for (auto& v : kept_pt) v = up(rng);
      const auto f = [&](double t) {
        Vec full(d);
        for (std::size_t i = 0, j = 0; i < d; ++i) {
          full[i] = (i == drop) ? t : kept_pt[j++];
        }
        return oracle::direct_density(model, full);
      };
      const double expect = oracle::trapezoid(f, -3.0 - 8 * 2.0, 3.0 + 8 * 2.0, 4000);
      CHECK(marg.density(kept_pt) == doctest::Approx(expect).epsilon(1e-3));
    }
  }
}

TEST_CASE("condition reweights kernels and agrees with the quadrature oracle") {
  // single kernel: conditional is that kernel's marginal, weight one
  Kernel k{1.0, Vec{1.0, 2.0}, Vec{0.5, 0.7}};
  const auto single = MixtureModel::from_kernels({"x", "y"}, {k}, 1.0, 1);
  const std::size_t idx0[] = {0};
  const auto c1 = single.condition(idx0, Vec{3.0});
  CHECK(c1.size() == 1);
  CHECK(c1.kernels()[0].weight == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c1.kernels()[0].center == Vec{2.0});

  // two kernels at (0,0) and (2,3): weights phi(0) : phi(2)
  const auto m = two_kernel_model(Vec{0.0, 0.0}, Vec{2.0, 3.0});
  const auto cond = m.condition(idx0, Vec{0.0});
  CHECK(cond.kernels()[0].weight == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(cond.kernels()[1].weight == doctest::Approx(0.119203).epsilon(1e-6));

  // conditional mean equals numeric integration of y * p(y|x)
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> up(-2.0, 2.0);
  for (int trial = 0; trial < 8; ++trial) {
    const auto model = oracle::random_model(rng, 2 + trial % 4, 2);
    const double x = up(rng);
    const auto cm = model.condition(idx0, Vec{x});
    double mean = 0.0;
    for (const Kernel& kn : cm.kernels()) mean += kn.weight * kn.center[0];

    const auto fnum = [&](double y) { return y * oracle::direct_density(model, Vec{x, y}); };
    const auto fden = [&](double y) { return oracle::direct_density(model, Vec{x, y}); };
    const double lo = -3.0 - 8 * 2.0, hi = 3.0 + 8 * 2.0;
    const double expect = oracle::trapezoid(fnum, lo, hi, 6000) /
                          oracle::trapezoid(fden, lo, hi, 6000);
    CHECK(mean == doctest::Approx(expect).epsilon(1e-3));
  }

  // conditioning far outside the support still yields usable weights
  const auto far = m.condition(idx0, Vec{2000.0});
  double sum = 0.0;
  for (const Kernel& kn : far.kernels()) sum += kn.weight;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(far.kernels()[1].weight > 0.9);  // nearest kernel dominates

  const std::size_t both[] = {0, 1};
  CHECK_THROWS_AS((void)m.condition(both, Vec{0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("Bayes identity: joint = conditional * marginal") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> up(-4.0, 4.0);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t d = 2 + trial % 2;
    const auto model = oracle::random_model(rng, 3 + trial, d);
    const std::size_t known[] = {0};
    const auto marg = model.marginal(std::span<const std::size_t>(known, 1));
    for (int q = 0; q < 25; ++q) {
      Vec pt(d);
      for (auto& v : pt) v = up(rng);
      const auto cond = model.condition(known, Vec{pt[0]});
      const Vec rest(pt.begin() + 1, pt.end());
      const double lhs = model.log_density(pt);
      const double rhs = cond.log_density(rest) + marg.log_density(Vec{pt[0]});
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
  }
}

TEST_CASE("add_sample keeps weights uniform for equal treatment") {
  MixtureOptions opts;
  opts.decay = 1.0;
  opts.budget = 100;
  MixtureModel m(oracle::component_names(2), opts);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> up(-5.0, 5.0);
  for (int i = 1; i <= 40; ++i) {
    m.add_sample(Vec{up(rng), up(rng)});
    CHECK(m.weight_sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (const Kernel& k : m.kernels()) {
      CHECK(k.weight == doctest::Approx(1.0 / i).epsilon(1e-12));
    }
  }
  CHECK(m.update_count() == 40);
  CHECK_THROWS_AS(m.add_sample(Vec{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(m.add_sample(Vec{1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("add_sample under budget pressure tracks an uncompressed estimate") {
  MixtureOptions opts;
  opts.budget = 100;
  MixtureModel m(oracle::component_names(2), opts);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Vec> data;
  for (int i = 0; i < 1000; ++i) {
    const bool left = i % 2 == 0;
    Vec x{(left ? 0.0 : 4.0) + n01(rng), (left ? 0.0 : 2.0) + n01(rng)};
    data.push_back(x);
    m.add_sample(x);
  }
  CHECK(m.size() <= 100);
  CHECK(m.weight_sum() == doctest::Approx(1.0).epsilon(1e-12));

  // uncompressed KDE over the same points with the model's final bandwidth
  std::vector<Kernel> raw(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    raw[i] = Kernel{1.0 / data.size(), data[i], m.bandwidth_template()};
  }
  const auto full =
      MixtureModel::from_kernels(oracle::component_names(2), std::move(raw), 1.0, data.size());

  Vec got(data.size()), expect(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    got[i] = m.density(data[i]);
    expect[i] = oracle::direct_density(full, data[i]);
  }
  CHECK(oracle::pearson(got, expect) > 0.95);
}

TEST_CASE("compress_merge moment-matches the closest pair") {
  auto m = two_kernel_model(Vec{-1.0}, Vec{1.0});
  m.compress_merge();
  REQUIRE(m.size() == 1);
  CHECK(m.kernels()[0].weight == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.kernels()[0].center[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(m.kernels()[0].bandwidth[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(m.compress_merge(), std::logic_error);

  // identical kernels merge into themselves with the summed weight
  auto same = two_kernel_model(Vec{2.0, -1.0}, Vec{2.0, -1.0}, 0.7);
  same.compress_merge();
  REQUIRE(same.size() == 1);
  CHECK(same.kernels()[0].weight == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(same.kernels()[0].center[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(same.kernels()[0].bandwidth[0] == doctest::Approx(0.7).epsilon(1e-12));

  // mixture mean and raw second moment preserved across merges
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    auto model = oracle::random_model(rng, 5, 3);
    const Vec mean_before = oracle::mixture_mean(model);
    const Vec m2_before = oracle::mixture_second_moment(model);
    model.compress_merge();
    const Vec mean_after = oracle::mixture_mean(model);
    const Vec m2_after = oracle::mixture_second_moment(model);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(mean_after[i] == doctest::Approx(mean_before[i]).epsilon(1e-12));
      CHECK(m2_after[i] == doctest::Approx(m2_before[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("compress_merge picks the pair a fresh scan would pick") {
  // drive the model through adds, forgets, and merges, then verify each
  // merge against a scan-based oracle over the public kernel list
  std::mt19937_64 rng(59);
  MixtureOptions opts;
  opts.budget = 64;
  MixtureModel m(oracle::component_names(2), opts);
  std::uniform_real_distribution<double> up(-8.0, 8.0);

  auto scan_cost = [](const Kernel& a, const Kernel& b) {
    double acc = 0.0;
    for (std::size_t d = 0; d < a.center.size(); ++d) {
      const double dc = a.center[d] - b.center[d];
      const double denom = a.weight * a.bandwidth[d] * a.bandwidth[d] +
                           b.weight * b.bandwidth[d] * b.bandwidth[d];
      acc += dc * dc / std::max(denom, 1e-300);
    }
    return a.weight * b.weight * acc;
  };

  int merges_checked = 0;
  for (int step = 0; step < 900; ++step) {
    m.add_sample(Vec{up(rng), up(rng)});
    if (m.size() >= 2 && step % 7 == 0) {
      const auto& ks = m.kernels();
      std::size_t bi = 0, bj = 1;
      double best = scan_cost(ks[0], ks[1]);
      for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
        for (std::size_t j = i + 1; j < ks.size(); ++j) {
          const double c = scan_cost(ks[i], ks[j]);
          if (c < best) {
            best = c;
            bi = i;
            bj = j;
          }
        }
      }
      const double wi = ks[bi].weight, wj = ks[bj].weight;
      Vec expect_center(2);
      for (std::size_t d = 0; d < 2; ++d) {
        expect_center[d] =
            (wi * ks[bi].center[d] + wj * ks[bj].center[d]) / (wi + wj);
      }
      const std::size_t size_before = m.size();
      m.compress_merge();
      REQUIRE(m.size() == size_before - 1);
      // merged kernel lands in slot bi with the summed weight
      CHECK(m.kernels()[bi].weight == doctest::Approx((wi + wj) / m.weight_sum()).epsilon(1e-9));
      CHECK(m.kernels()[bi].center[0] == doctest::Approx(expect_center[0]).epsilon(1e-9));
      CHECK(m.kernels()[bi].center[1] == doctest::Approx(expect_center[1]).epsilon(1e-9));
      ++merges_checked;
    }
  }
  CHECK(merges_checked > 100);
}

TEST_CASE("forget_decay redistributes mass and drops starved kernels") {
  auto m = two_kernel_model(Vec{0.0}, Vec{5.0});

  SUBCASE("decay of one is the identity") {
    MixtureOptions opts = m.options();
    const Vec before{m.kernels()[0].weight, m.kernels()[1].weight};
    m.forget_decay(std::nullopt);
    CHECK(m.kernels()[0].weight == doctest::Approx(before[0]).epsilon(1e-12));
    CHECK(m.kernels()[1].weight == doctest::Approx(before[1]).epsilon(1e-12));
  }

  SUBCASE("mass moves to the matched kernel") {
    MixtureOptions opts;
    opts.decay = 0.9;
    auto model = MixtureModel::from_kernels(oracle::component_names(1),
                                            {Kernel{0.5, Vec{0.0}, Vec{1.0}},
                                             Kernel{0.5, Vec{5.0}, Vec{1.0}}},
                                            1.0, 2, opts);
    model.forget_decay(0);
    CHECK(model.kernels()[0].weight == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(model.kernels()[1].weight == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(model.kernels()[0].hit_count == 1);
    CHECK(model.weight_sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("unreinforced kernels eventually vanish") {
    MixtureOptions opts;
    opts.decay = 0.9;
    auto model = MixtureModel::from_kernels(oracle::component_names(1),
                                            {Kernel{0.5, Vec{0.0}, Vec{1.0}},
                                             Kernel{0.5, Vec{5.0}, Vec{1.0}}},
                                            1.0, 2, opts);
    for (int i = 0; i < 400 && model.size() > 1; ++i) {
      model.forget_decay(0);
      CHECK(model.weight_sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(model.size() == 1);
    CHECK(model.kernels()[0].center[0] == 0.0);
  }

  MixtureModel empty(oracle::component_names(1));
  CHECK_NOTHROW(empty.forget_decay(std::nullopt));
}

TEST_CASE("update_bandwidth maximizes the leave-one-out likelihood") {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::size_t n = 500;
  std::vector<Kernel> ks(n);
  for (auto& k : ks) k = Kernel{1.0 / n, Vec{n01(rng)}, Vec{1.0}};
  auto m = MixtureModel::from_kernels({"x"}, std::move(ks), 1.0, n);
  m.update_bandwidth();

  const double s = m.bandwidth_template()[0];
  CHECK(s >= 0.1);
  CHECK(s <= 1.0);
  for (const Kernel& k : m.kernels()) CHECK(k.bandwidth[0] == s);

  // direct evaluation of the leave-one-out objective on an h grid; the
  // selected h must score at least as well as the best grid point
  const auto& kernels = m.kernels();
  double sigma = 0.0, mu = 0.0;
  for (const Kernel& k : kernels) mu += k.weight * k.center[0];
  for (const Kernel& k : kernels) {
    sigma += k.weight * (k.center[0] - mu) * (k.center[0] - mu);
  }
  sigma = std::sqrt(sigma);
  auto loo = [&](double h) {
    double total = 0.0;
    for (std::size_t j = 0; j < kernels.size(); ++j) {
      double p = 0.0;
      for (std::size_t k = 0; k < kernels.size(); ++k) {
        if (k == j) continue;
        p += kernels[k].weight / (1.0 - kernels[j].weight) *
             oracle::normal_pdf(kernels[j].center[0] - kernels[k].center[0], h * sigma);
      }
      total += kernels[j].weight * std::log(p);
    }
    return total;
  };
  double best_grid = -1e300;
  for (int i = 0; i <= 80; ++i) {
    const double h = 0.05 * std::pow(100.0, i / 80.0);
    best_grid = std::max(best_grid, loo(h));
  }
  const double got = loo(m.bandwidth_scale());
  CHECK(got >= best_grid - std::max(0.01, 0.01 * std::abs(best_grid)));
}

TEST_CASE("update_bandwidth survives degenerate center sets") {
  std::vector<Kernel> ks(5, Kernel{0.2, Vec{3.0, -1.0}, Vec{1.0, 1.0}});
  auto m = MixtureModel::from_kernels(oracle::component_names(2), std::move(ks), 1.0, 5);
  m.update_bandwidth();
  CHECK(m.bandwidth_scale() < 0.06);  // argmax sits at the lower search boundary
  for (double s : m.bandwidth_template()) {
    CHECK(s >= assoc::kMinBandwidth);
    CHECK(std::isfinite(s));
  }
}

TEST_CASE("update_bandwidth is scale equivariant") {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Kernel> a(200), b(200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double c = n01(rng);
    a[i] = Kernel{1.0 / 200, Vec{c}, Vec{1.0}};
    b[i] = Kernel{1.0 / 200, Vec{2.0 * c}, Vec{1.0}};
  }
  auto ma = MixtureModel::from_kernels({"x"}, std::move(a), 1.0, 200);
  auto mb = MixtureModel::from_kernels({"x"}, std::move(b), 1.0, 200);
  ma.update_bandwidth();
  mb.update_bandwidth();
  CHECK(mb.bandwidth_template()[0] ==
        doctest::Approx(2.0 * ma.bandwidth_template()[0]).epsilon(0.01));
}

TEST_CASE("draw is seeded and respects weights") {
  Kernel k{1.0, Vec{2.5}, Vec{1.0}};
  const auto single = MixtureModel::from_kernels({"x"}, {k}, 1.0, 1);
  std::mt19937_64 rng(5);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += single.draw(rng)[0];
  CHECK(acc / n == doctest::Approx(2.5).epsilon(0.02 / 2.5));

  // degenerate weights: only the first kernel is ever selected
  auto m = MixtureModel::from_kernels(
      {"x"}, {Kernel{1.0, Vec{0.0}, Vec{1e-6}}, Kernel{0.0, Vec{100.0}, Vec{1e-6}}}, 1.0, 2);
  std::mt19937_64 r2(9);
  for (int i = 0; i < 2000; ++i) CHECK(std::abs(m.draw(r2)[0]) < 1.0);

  // determinism
  std::mt19937_64 ra(77), rb(77);
  for (int i = 0; i < 50; ++i) CHECK(single.draw(ra) == single.draw(rb));
}

TEST_CASE("weight sum stays one through random operation sequences") {
  std::mt19937_64 rng(131);
  MixtureOptions opts;
  opts.budget = 30;
  opts.decay = 0.995;
  MixtureModel m(oracle::component_names(3), opts);
  std::uniform_real_distribution<double> up(-5.0, 5.0);
  std::uniform_int_distribution<int> op(0, 9);
  for (int i = 0; i < 2000; ++i) {
    switch (op(rng)) {
      case 0:
      case 1:
      case 2:
      case 3:
      case 4:
      case 5:
        m.add_sample(Vec{up(rng), up(rng), up(rng)});
        break;
      case 6:
        if (m.size() >= 2) m.compress_merge();
        break;
      case 7:
        if (!m.empty()) {
          std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
          m.forget_decay(pick(rng));
        }
        break;
      case 8:
        if (!m.empty()) m.forget_decay(std::nullopt);
        break;
      default:
        if (m.size() >= 2) m.update_bandwidth();
        break;
    }
    if (!m.empty()) REQUIRE(m.weight_sum() == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(m.size() <= opts.budget);
  }
}

TEST_CASE("1-D density integrates to one") {
  std::mt19937_64 rng(149);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = oracle::random_model(rng, 1 + trial, 1);
    double lo = 1e300, hi = -1e300, smax = 0.0;
    for (const Kernel& k : m.kernels()) {
      lo = std::min(lo, k.center[0]);
      hi = std::max(hi, k.center[0]);
      smax = std::max(smax, k.bandwidth[0]);
    }
    const double integral = oracle::trapezoid([&](double x) { return m.density(Vec{x}); },
                                              lo - 10 * smax, hi + 10 * smax, 20000);
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  }
}

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hrsae/baselines.hpp"
#include "hrsae/error.hpp"
#include "test_util.hpp"

using namespace hrsae;

namespace {

// Henderson method 3 from the generic projection formulas:
// s2e = y'(I - P_[X Z])y / (n - rank[X Z]),
// s2v = (y'(I - P_X)y - (n - p) s2e) / (n - tr((X'X)^{-1} X'ZZ'X)).
VarianceComponents henderson_oracle(const Sample& s, std::span<const double> x_pop,
                                    const std::vector<double>& ys, const Domain& dom) {
  const Eigen::Index n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd X(n, 2), Z(n, 2), XZ(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t i = s.indices[static_cast<std::size_t>(k)];
    X(k, 0) = 1.0;
    X(k, 1) = x_pop[i];
    Z(k, 0) = dom.contains(i) ? 1.0 : 0.0;
    Z(k, 1) = 1.0 - Z(k, 0);
    XZ(k, 0) = X(k, 1);
    XZ(k, 1) = Z(k, 0);
    XZ(k, 2) = Z(k, 1);
    y(k) = ys[static_cast<std::size_t>(k)];
  }
  auto resid_ss = [&](const Eigen::MatrixXd& A) {
    const Eigen::VectorXd b = A.colPivHouseholderQr().solve(y);
    return (y - A * b).squaredNorm();
  };
  VarianceComponents vc;
  vc.sigma2_e = resid_ss(XZ) / static_cast<double>(n - 3);
  const Eigen::Matrix2d xtx = X.transpose() * X;
  const double tr = (xtx.inverse() * X.transpose() * Z * Z.transpose() * X).trace();
  vc.sigma2_v = std::max(0.0, (resid_ss(X) - (n - 2) * vc.sigma2_e) / (n - tr));
  return vc;
}

struct TwoArea {
  Population pop;
  Domain domain;
  DesignSpec design;
  Sample sample;
  std::vector<double> ys;
};

TwoArea two_area(std::uint64_t seed, std::size_t N = 60, std::size_t m = 15, std::size_t n = 20) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> xd(5, 2), e(0, 1), v(0, 1.5);
  const double v_dom = v(gen), v_out = v(gen);
  std::vector<double> z(N), x(N), y(N);
  for (std::size_t i = 0; i < N; ++i) {
    z[i] = static_cast<double>(i);
    x[i] = xd(gen);
    y[i] = 1.0 + 0.8 * x[i] + (i < m ? v_dom : v_out) + e(gen);
  }
  Population pop = Population::from_unsorted(z, x, y);
  std::vector<std::size_t> members(m);
  std::iota(members.begin(), members.end(), std::size_t{0});
  Domain dom(members, N);
  const DesignSpec d = DesignSpec::srswor(n, N);
  Rng rng = make_stream(seed);
  Sample s = draw_sample(d, rng);
  auto ys = gather(pop.y(), s);
  return {std::move(pop), std::move(dom), d, std::move(s), std::move(ys)};
}

}  // namespace

TEST_CASE("simple synthetic") {
  const Population pop = test::six_unit_fixture();
  const DesignSpec d = DesignSpec::srswor(3, 6);
  const Sample s = make_sample(d, {0, 1, 5});
  const auto ys = gather(pop.y(), s);
  CHECK(simple_synthetic(s, ys, 6, 6) == doctest::Approx(ht_total(s, ys)));
  const ThetaVector unif = theta_from_probs(OrderProbMatrix::uniform(6), Domain({0, 1}, 6));
  CHECK(simple_synthetic(s, ys, 2, 6) == doctest::Approx(hr_total(s, unif, ys)));
  double acc = 0, cnt = 0;
  test::each_subset(6, 3, [&](const std::vector<std::size_t>& idx) {
    const Sample t = make_sample(d, idx);
    acc += simple_synthetic(t, gather(pop.y(), t), 2, 6);
    cnt += 1;
  });
  double ty = 0;
  for (double v : pop.y()) ty += v;
  CHECK(acc / cnt == doctest::Approx(2.0 / 6.0 * ty).epsilon(1e-13));
}

TEST_CASE("weighted least squares fit") {
  const DesignSpec d = DesignSpec::srswor(4, 10);
  const Sample s = make_sample(d, {0, 3, 6, 9});
  const std::vector<double> xs = {1, 2, 4, 7};
  std::vector<double> ys;
  for (double v : xs) ys.push_back(2.0 + v);
  const ModelXi fit = fit_xi(s, xs, ys);
  CHECK(fit.beta1 == doctest::Approx(2.0));
  CHECK(fit.beta2 == doctest::Approx(1.0));
  CHECK(fit.sigma2 == doctest::Approx(0.0));
  CHECK_THROWS_AS(fit_xi(s, std::vector<double>(4, 3.0), ys), DegenerateError);
  const Sample two = make_sample(DesignSpec::srswor(2, 10), {0, 1});
  CHECK_THROWS_AS(fit_xi(two, std::vector<double>{1, 2}, std::vector<double>{1, 2}), DegenerateError);
}

TEST_CASE("synthetic and GREG recover an exact affine relation") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<double> z(40), x(40), y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    z[i] = u(gen);
    x[i] = u(gen);
    y[i] = 2.0 + x[i];
  }
  const Population pop = Population::from_unsorted(z, x, y);
  const Domain dom(test::random_subset(40, 8, gen), 40);
  const DesignSpec d = DesignSpec::srswor(12, 40);
  for (std::uint64_t k = 0; k < 20; ++k) {
    Rng rng = make_stream(k);
    const Sample s = draw_sample(d, rng);
    const auto ys = gather(pop.y(), s);
    CHECK(*syn_estimator(s, pop.x(), ys, dom).point == doctest::Approx(domain_total(pop, dom)));
    const EstimateReport g = greg_estimator(s, pop.x(), ys, dom);
    if (domain_hits(s, dom) > 0) {
      CHECK(*g.point == doctest::Approx(domain_total(pop, dom)));
    } else {
      CHECK(g.flags.has(Flag::Unavailable));
    }
  }
}

TEST_CASE("GREG hand assembly on the six-unit fixture") {
  const Population pop = test::six_unit_fixture();
  const Domain dom({1, 2, 4}, 6);
  const DesignSpec d = DesignSpec::srswor(4, 6);
  const Sample s = make_sample(d, {0, 1, 3, 4});
  const auto ys = gather(pop.y(), s);
  const auto xs = gather(pop.x(), s);
  // Equal weights: the weighted fit is ordinary least squares.
  const double mx = (xs[0] + xs[1] + xs[2] + xs[3]) / 4, my = (ys[0] + ys[1] + ys[2] + ys[3]) / 4;
  double sxy = 0, sxx = 0;
  for (int k = 0; k < 4; ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  const double b2 = sxy / sxx, b1 = my - b2 * mx;
  // s ∩ D = units 1 and 4, weight 1.5 each.
  const double ht_y = 1.5 * (ys[1] + ys[3]);
  const double ht_x = 1.5 * (xs[1] + xs[3]);
  const double t_x = pop.x()[1] + pop.x()[2] + pop.x()[4];
  const double expected = ht_y + b1 * (3.0 - 3.0) + b2 * (t_x - ht_x);
  CHECK(*greg_estimator(s, pop.x(), ys, dom).point == doctest::Approx(expected).epsilon(1e-13));
  const Sample miss = make_sample(d, {0, 3, 5, 2});
  CHECK(greg_estimator(miss, pop.x(), gather(pop.y(), miss), Domain({1}, 6)).flags.has(Flag::EmptyIntersection));
}

TEST_CASE("shrinkage factor") {
  CHECK(shrinkage_factor({2.0, 4.0}, 2) == doctest::Approx(0.5));
  CHECK(shrinkage_factor({0.0, 4.0}, 10) == 0.0);
  CHECK(shrinkage_factor({1.0, 4.0}, 0) == 0.0);
  CHECK(shrinkage_factor({1.0, 1e-12}, 3) == doctest::Approx(1.0));
}

TEST_CASE("EBLUP limits and the shrinkage path") {
  const TwoArea t = two_area(21);
  const EblupFit zero = eblup_with_components(t.sample, t.pop.x(), t.ys, t.domain, {0.0, 1.0});
  CHECK(zero.gamma_domain == 0.0);
  CHECK(zero.domain_total ==
        doctest::Approx(*syn_estimator(t.sample, t.pop.x(), t.ys, t.domain).point).epsilon(1e-10));

  const EblupFit sharp = eblup_with_components(t.sample, t.pop.x(), t.ys, t.domain, {1.0, 1e-12});
  CHECK(sharp.gamma_domain == doctest::Approx(1.0));
  const auto& a = sharp.domain;
  const double direct = a.size * (a.y_mean + sharp.beta[1] * (a.x_pop_mean - a.x_mean));
  CHECK(sharp.domain_total == doctest::Approx(direct).epsilon(1e-8));

  // Hand-computed gamma for known components.
  const EblupFit mid = eblup_with_components(t.sample, t.pop.x(), t.ys, t.domain, {2.0, 3.0});
  const double nd = static_cast<double>(mid.domain.n_sampled);
  CHECK(mid.gamma_domain == doctest::Approx(2.0 / (2.0 + 3.0 / nd)));
  CHECK(mid.domain_total == doctest::Approx(eblup_area_total(mid.domain, mid.beta, mid.gamma_domain)));

  double prev = eblup_area_total(mid.domain, mid.beta, 0.0);
  const double end = eblup_area_total(mid.domain, mid.beta, 1.0);
  for (int k = 1; k <= 10; ++k) {
    const double v = eblup_area_total(mid.domain, mid.beta, k / 10.0);
    CHECK((end >= prev ? v >= prev - 1e-12 : v <= prev + 1e-12));
    prev = v;
  }
}

TEST_CASE("Henderson method 3 against the projection formulas") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const TwoArea t = two_area(seed, 80, 20, 30);
    if (domain_hits(t.sample, t.domain) < 2) continue;
    const VarianceComponents got = henderson3(t.sample, t.pop.x(), t.ys, t.domain);
    const VarianceComponents want = henderson_oracle(t.sample, t.pop.x(), t.ys, t.domain);
    CHECK(got.sigma2_e == doctest::Approx(want.sigma2_e).epsilon(1e-9));
    CHECK(got.sigma2_v == doctest::Approx(want.sigma2_v).epsilon(1e-9));
  }
}

TEST_CASE("EBLUP falls back to synthetic with a single sampled area") {
  const Population pop = test::six_unit_fixture();
  const Domain dom({5}, 6);
  const DesignSpec d = DesignSpec::srswor(4, 6);
  const Sample s = make_sample(d, {0, 1, 2, 3});
  const auto ys = gather(pop.y(), s);
  const EstimateReport r = eblup_estimator(s, pop.x(), ys, dom);
  CHECK(r.flags.has(Flag::SyntheticFallback));
  CHECK(*r.point == doctest::Approx(*syn_estimator(s, pop.x(), ys, dom).point));
  CHECK_THROWS_AS(henderson3(s, pop.x(), ys, dom), DegenerateError);
}

// Randomized invariant checks. Each case draws its inputs from a seeded
// generator; the seed is reported on failure.

#include <doctest.h>

#include <cmath>

#include "hrsae/baselines.hpp"
#include "hrsae/estimators.hpp"
#include "test_util.hpp"

using namespace hrsae;

namespace {

constexpr int kCases = 60;

struct Gen {
  std::mt19937_64 eng;
  explicit Gen(std::uint64_t seed) : eng(seed) {}
  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& e : v) e = real(lo, hi);
    return v;
  }
  Population population(std::size_t N) { return test::random_population(N, eng); }
  Domain domain(std::size_t N) { return Domain(test::random_subset(N, size(1, N - 1), eng), N); }
  std::vector<Domain> partition(std::size_t N, std::size_t blocks) {
    std::vector<std::vector<std::size_t>> parts(blocks);
    std::vector<std::size_t> units(N);
    std::iota(units.begin(), units.end(), std::size_t{0});
    std::shuffle(units.begin(), units.end(), eng);
    for (std::size_t k = 0; k < N; ++k) parts[k < blocks ? k : size(0, blocks - 1)].push_back(units[k]);
    std::vector<Domain> out;
    for (auto& p : parts) out.emplace_back(std::move(p), N);
    return out;
  }
};

}  // namespace

TEST_CASE("property: order-probability counts form a doubly stochastic matrix") {
  for (int c = 0; c < kCases; ++c) {
    Gen g(1000 + c);
    INFO("case seed " << 1000 + c);
    const std::size_t N = g.size(3, 60);
    const Population pop = g.population(N);
    const EtaModel eta = fit_eta(pop.z(), pop.x(), c % 2 ? VarianceMode::Binned : VarianceMode::Pooled,
                                 c % 3 ? ErrorLaw::Normal : ErrorLaw::EmpiricalResidual);
    McOptions opt;
    opt.threads = g.size(1, 3);
    opt.chunk = g.size(1, 500);
    const auto p = mc_order_probs(eta, pop.z(), g.size(1, 3000), g.eng(), opt);
    CHECK(p.max_row_sum_error() <= 1e-9);
    CHECK(p.max_col_sum_error() <= 1e-9);
  }
}

TEST_CASE("property: theta is a probability vector summing to m, and partitions sum to 1") {
  for (int c = 0; c < kCases; ++c) {
    Gen g(2000 + c);
    INFO("case seed " << 2000 + c);
    const std::size_t N = g.size(4, 50);
    const Population pop = g.population(N);
    const auto p = mc_order_probs(fit_eta(pop.z(), pop.x()), pop.z(), g.size(10, 2000), g.eng());
    const auto blocks = g.partition(N, g.size(2, std::min<std::size_t>(N, 6)));
    std::vector<double> total(N, 0.0);
    for (const auto& b : blocks) {
      const ThetaVector t = theta_from_probs(p, b);
      double sum = 0;
      for (std::size_t i = 0; i < N; ++i) {
        CHECK(t[i] >= 0.0);
        CHECK(t[i] <= 1.0);
        sum += t[i];
        total[i] += t[i];
      }
      CHECK(sum == doctest::Approx(static_cast<double>(b.size())).epsilon(1e-9));
    }
    for (double v : total) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("property: HR totals over a partition add up to the whole HT total") {
  for (int c = 0; c < kCases; ++c) {
    Gen g(3000 + c);
    INFO("case seed " << 3000 + c);
    const std::size_t N = g.size(6, 80);
    const Population pop = g.population(N);
    const auto p = mc_order_probs(fit_eta(pop.z(), pop.x()), pop.z(), g.size(50, 1000), g.eng());
    const auto blocks = g.partition(N, g.size(2, 5));
    const DesignSpec d = DesignSpec::srswor(g.size(1, N), N);
    Rng rng = make_stream(g.eng());
    const Sample s = draw_sample(d, rng);
    const auto ys = gather(pop.y(), s);
    double sum = 0;
    for (const auto& b : blocks) sum += hr_total(s, theta_from_probs(p, b), ys);
    CHECK(std::abs(sum - ht_total(s, ys)) <= 1e-9);
  }
}

TEST_CASE("property: identity, uniform and whole-population collapses") {
  for (int c = 0; c < kCases; ++c) {
    Gen g(4000 + c);
    INFO("case seed " << 4000 + c);
    const std::size_t N = g.size(3, 60);
    const Population pop = g.population(N);
    const Domain D = g.domain(N);
    const DesignSpec d = DesignSpec::srswor(g.size(1, N), N);
    Rng rng = make_stream(g.eng());
    const Sample s = draw_sample(d, rng);
    const auto ys = gather(pop.y(), s);
    const double m = static_cast<double>(D.size());
    CHECK(std::abs(hr_total(s, theta_from_probs(OrderProbMatrix::identity(N), D), ys) -
                   ht_domain_total(s, ys, D).value) <= 1e-12);
    CHECK(std::abs(hr_total(s, theta_from_probs(OrderProbMatrix::uniform(N), D), ys) -
                   m / N * ht_total(s, ys)) <= 1e-12);
    CHECK(std::abs(hr_total(s, theta_from_probs(OrderProbMatrix::uniform(N), Domain::whole(N)), ys) -
                   ht_total(s, ys)) <= 1e-12);
  }
}

TEST_CASE("property: SRSWOR inclusion identities") {
  for (int c = 0; c < kCases; ++c) {
    Gen g(5000 + c);
    const std::size_t N = g.size(2, 500);
    const std::size_t n = g.size(1, N);
    INFO("N=" << N << " n=" << n);
    const InclusionProbs pi(DesignSpec::srswor(n, N));
    CHECK(pi.first(0) * N == doctest::Approx(static_cast<double>(n)));
    CHECK(pi.second(0, 1) * (N - 1) == doctest::Approx((n - 1.0) * pi.first(0)).epsilon(1e-12));
  }
}

TEST_CASE("property: the sample bilinear form is design unbiased") {
  for (int c = 0; c < 20; ++c) {
    Gen g(6000 + c);
    const std::size_t N = g.size(3, 8);
    const std::size_t n = g.size(2, N);
    INFO("N=" << N << " n=" << n);
    const DesignSpec d = DesignSpec::srswor(n, N);
    const DesignCoeffs coeffs(d);
    const auto u = g.reals(N, -4, 4), v = g.reals(N, -4, 4);
    double acc = 0, cnt = 0;
    test::each_subset(N, n, [&](const std::vector<std::size_t>& idx) {
      const Sample s = make_sample(d, idx);
      acc += coeffs.sample_form(gather(u, s), gather(v, s));
      cnt += 1;
    });
    CHECK(std::abs(acc / cnt - coeffs.population_form(u, v)) <= 1e-10);
  }
}

TEST_CASE("property: bias estimate vanishes at rho = 1 and for flat theta") {
  for (int c = 0; c < kCases; ++c) {
    Gen g(7000 + c);
    INFO("case seed " << 7000 + c);
    const std::size_t N = g.size(4, 50);
    const std::size_t m = g.size(1, N - 1);
    const DesignSpec d = DesignSpec::srswor(g.size(1, N), N);
    Rng rng = make_stream(g.eng());
    const Sample s = draw_sample(d, rng);
    const auto ys = g.reals(s.size(), -5, 20);
    auto th = g.reals(N, 0, 1);
    const ThetaVector theta{th, m};
    CHECK(*hr_bias_est(s, theta, ys, 1.0, m, N) == 0.0);
    const ThetaVector flat{std::vector<double>(N, static_cast<double>(m) / N), m};
    CHECK(std::abs(*hr_bias_est(s, flat, ys, g.real(0.05, 0.95), m, N)) <= 1e-9);
  }
}

TEST_CASE("property: b0 minimizes the linearized MSE") {
  for (int c = 0; c < 30; ++c) {
    Gen g(8000 + c);
    INFO("case seed " << 8000 + c);
    const std::size_t N = g.size(6, 40);
    const Population pop = g.population(N);
    const Domain D = g.domain(N);
    const DesignCoeffs coeffs(DesignSpec::srswor(g.size(2, N - 1), N));
    const ThetaVector theta = theta_from_probs(mc_order_probs(fit_eta(pop.z(), pop.x()), pop.z(), 500, c), D);
    const auto b0 = b0_true(pop, theta, D, coeffs);
    REQUIRE(b0);
    const double at = rhr_mse_true(pop, theta, D, coeffs, *b0);
    for (int k = 0; k < 10; ++k) {
      const double b = *b0 + g.real(-3, 3);
      CHECK(rhr_mse_true(pop, theta, D, coeffs, b) >= at - 1e-9 * std::max(1.0, at));
    }
  }
}

TEST_CASE("property: MSE reports are non-negative and assemble their parts") {
  for (int c = 0; c < kCases; ++c) {
    Gen g(9000 + c);
    INFO("case seed " << 9000 + c);
    const std::size_t N = g.size(8, 60);
    const Population pop = g.population(N);
    const Domain D = g.domain(N);
    const DesignSpec d = DesignSpec::srswor(g.size(3, N - 1), N);
    const DesignCoeffs coeffs(d);
    const ThetaVector theta = theta_from_probs(mc_order_probs(fit_eta(pop.z(), pop.x()), pop.z(), 300, c), D);
    Rng rng = make_stream(g.eng());
    const Sample s = draw_sample(d, rng);
    const auto ys = gather(pop.y(), s), xs = gather(pop.x(), s);
    const double rho = g.real(0.1, 0.99);
    const EstimateReport hr = hr_mse_est(s, theta, ys, coeffs, rho, D.size(), N);
    CHECK(*hr.mse_hat >= 0.0);
    CHECK(*hr.mse_hat == doctest::Approx(std::max(0.0, *hr.var_hat) + *hr.bias_hat * *hr.bias_hat));
    const EstimateReport rhr = rhr_mse_est(s, theta, ys, xs, domain_sum(pop.x(), D), coeffs, rho, D.size(), N);
    CHECK(*rhr.mse_hat >= 0.0);
    REQUIRE(rhr.point);
    CHECK(std::isfinite(*rhr.point));
  }
}

#include <doctest.h>

#include <cmath>
#include <map>

#include "hrsae/error.hpp"
#include "hrsae/sampling.hpp"
#include "test_util.hpp"

using namespace hrsae;

TEST_CASE("SRSWOR inclusion probabilities for N=6, n=3") {
  const DesignSpec design = DesignSpec::srswor(3, 6);
  const InclusionProbs pi(design);
  CHECK(pi.first(0) == doctest::Approx(0.5));
  CHECK(pi.second(0, 1) == doctest::Approx(0.2));
  CHECK(pi.second(4, 4) == doctest::Approx(0.5));

  // Frequencies over the 20 equally likely samples.
  std::vector<double> single(6, 0.0);
  std::vector<std::vector<double>> pair(6, std::vector<double>(6, 0.0));
  double count = 0;
  test::each_subset(6, 3, [&](const std::vector<std::size_t>& s) {
    count += 1;
    for (auto i : s) {
      single[i] += 1;
      for (auto j : s) pair[i][j] += 1;
    }
  });
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(pi.first(i) == doctest::Approx(single[i] / count));
    for (std::size_t j = 0; j < 6; ++j) CHECK(pi.second(i, j) == doctest::Approx(pair[i][j] / count));
  }
}

TEST_CASE("design coefficients for N=6, n=3") {
  const DesignCoeffs c(DesignSpec::srswor(3, 6));
  CHECK(c.a_diag() == doctest::Approx(1.0));
  CHECK(c.a_off() == doctest::Approx(-0.2));
  CHECK(c.a_tilde_diag() == doctest::Approx(2.0));
  CHECK(c.a_tilde_off() == doctest::Approx(-1.0));
  CHECK(c.a(2, 2) == c.a_diag());
  CHECK(c.a_tilde(1, 3) == c.a_tilde_off());
}

TEST_CASE("bilinear forms agree with the double sum") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-2.0, 5.0);
  for (std::size_t N : {2u, 7u, 31u}) {
    for (std::size_t n : {std::size_t{1}, N / 2 + 1, N}) {
      const DesignCoeffs c(DesignSpec::srswor(n, N));
      std::vector<double> p(N), q(N);
      for (auto& v : p) v = u(gen);
      for (auto& v : q) v = u(gen);
      double brute = 0.0, brute_t = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          brute += c.a(i, j) * p[i] * q[j];
          brute_t += c.a_tilde(i, j) * p[i] * q[j];
        }
      }
      CHECK(c.population_form(p, q) == doctest::Approx(brute).epsilon(1e-12));
      if (n > 1) CHECK(c.sample_form(p, q) == doctest::Approx(brute_t).epsilon(1e-12));
    }
  }
}

TEST_CASE("design validation") {
  CHECK_THROWS_AS(DesignSpec::srswor(0, 5), DataError);
  CHECK_THROWS_AS(DesignSpec::srswor(6, 5), DataError);
  const DesignSpec d = DesignSpec::srswor(2, 5);
  CHECK_THROWS_AS(make_sample(d, {0}), DataError);
  CHECK_THROWS_AS(make_sample(d, {1, 1}), DataError);
  CHECK_THROWS_AS(make_sample(d, {1, 5}), DataError);
  const Sample s = make_sample(d, {4, 1});
  CHECK(s.indices == std::vector<std::size_t>{1, 4});
  CHECK(s.weights[0] == doctest::Approx(2.5));
}

TEST_CASE("draws are sorted, distinct and reproducible") {
  const DesignSpec d = DesignSpec::srswor(10, 40);
  Rng a = make_stream(5, {1});
  Rng b = make_stream(5, {1});
  Rng c = make_stream(5, {2});
  const Sample sa = draw_sample(d, a);
  CHECK(sa.indices == draw_sample(d, b).indices);
  CHECK(sa.indices != draw_sample(d, c).indices);
  CHECK(std::is_sorted(sa.indices.begin(), sa.indices.end()));
  CHECK(std::adjacent_find(sa.indices.begin(), sa.indices.end()) == sa.indices.end());
}

TEST_CASE("draw frequencies are uniform over units") {
  const DesignSpec d = DesignSpec::srswor(3, 8);
  Rng rng = make_stream(99);
  std::vector<double> hits(8, 0.0);
  const int draws = 40000;
  for (int k = 0; k < draws; ++k) {
    for (auto i : draw_sample(d, rng).indices) hits[i] += 1;
  }
  // pi = 3/8; binomial sd of the frequency is about 0.0024.
  for (double h : hits) CHECK(std::abs(h / draws - 0.375) < 0.012);
}

TEST_CASE("Horvitz-Thompson totals and domain hits") {
  const DesignSpec d = DesignSpec::srswor(2, 4);
  const Sample s = make_sample(d, {0, 3});
  const std::vector<double> ys = {1.0, 5.0};
  CHECK(ht_total(s, ys) == doctest::Approx(12.0));
  const HtResult in = ht_domain_total(s, ys, Domain({3}, 4));
  CHECK(in.value == doctest::Approx(10.0));
  CHECK_FALSE(in.empty_intersection);
  const HtResult out = ht_domain_total(s, ys, Domain({1, 2}, 4));
  CHECK(out.value == 0.0);
  CHECK(out.empty_intersection);
  CHECK(domain_hits(s, Domain({0, 1, 3}, 4)) == 2);
}

TEST_CASE("HT is design unbiased by enumeration") {
  const Population pop = test::six_unit_fixture();
  const Domain dom({0, 5}, 6);
  const DesignSpec d = DesignSpec::srswor(2, 6);
  double sum = 0, count = 0;
  test::each_subset(6, 2, [&](const std::vector<std::size_t>& idx) {
    const Sample s = make_sample(d, idx);
    sum += ht_domain_total(s, gather(pop.y(), s), dom).value;
    count += 1;
  });
  CHECK(count == 15);
  CHECK(sum / count == doctest::Approx(domain_total(pop, dom)).epsilon(1e-13));
}

#include "hrsae/validation.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "hrsae/error.hpp"
#include "hrsae/estimators.hpp"
#include "hrsae/orderprob.hpp"
#include "hrsae/sampling.hpp"

namespace hrsae {

namespace {

void for_each_subset(std::size_t N, std::size_t n, const std::function<void(std::vector<std::size_t>)>& fn) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    fn(idx);
    std::size_t k = n;
    while (k > 0 && idx[k - 1] == N - n + k - 1) --k;
    if (k == 0) return;
    ++idx[k - 1];
    for (std::size_t j = k; j < n; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

struct Fixture {
  Population pop;
  Domain domain;
  DesignSpec design;
  DesignCoeffs coeffs;
  ThetaVector theta;
};

Fixture make_fixture() {
  Population pop = Population::from_unsorted({1.2, 0.7, 2.9, 3.1, 4.4, 5.0},
                                             {2.0, 1.1, 3.5, 2.8, 5.1, 6.3},
                                             std::vector<double>{3.0, 1.5, 4.2, 3.9, 7.0, 8.1});
  Domain domain({1, 2, 4}, pop.size());
  const EtaModel eta = fit_eta(pop.z(), pop.x());
  const OrderProbMatrix probs = mc_order_probs(eta, pop.z(), 5000, 7);
  ThetaVector theta = theta_from_probs(probs, domain);
  const DesignSpec design = DesignSpec::srswor(3, pop.size());
  return Fixture{std::move(pop), std::move(domain), design, DesignCoeffs(design), std::move(theta)};
}

CheckResult check_close(const std::string& name, double got, double want, double tol) {
  const double err = std::abs(got - want);
  return {name, err <= tol, "|diff|=" + fmt(err) + " tol=" + fmt(tol)};
}

}  // namespace

std::vector<CheckResult> run_validation(const std::optional<std::filesystem::path>& cache) {
  std::vector<CheckResult> out;
  auto guarded = [&out](const std::string& name, const std::function<CheckResult()>& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };

  const Fixture f = make_fixture();
  const auto y = f.pop.y();
  const auto x = f.pop.x();

  // Exhaustive enumeration over all 20 samples.
  double n_samples = 0.0, e_hr = 0.0, e_hr2 = 0.0, e_var = 0.0, e_cov = 0.0, e_ht = 0.0;
  double e_hr_x = 0.0, e_hr_xy = 0.0;
  for_each_subset(f.pop.size(), f.design.n, [&](std::vector<std::size_t> idx) {
    const Sample s = make_sample(f.design, std::move(idx));
    const auto ys = gather(y, s);
    const auto xs = gather(x, s);
    const double hy = hr_total(s, f.theta, ys);
    const double hx = hr_total(s, f.theta, xs);
    n_samples += 1.0;
    e_hr += hy;
    e_hr2 += hy * hy;
    e_hr_x += hx;
    e_hr_xy += hy * hx;
    e_var += hr_var_est(s, f.theta, ys, f.coeffs);
    e_cov += design_cov_est(s, f.theta, ys, xs, f.coeffs);
    e_ht += ht_domain_total(s, ys, f.domain).value;
  });
  e_hr /= n_samples;
  e_hr2 /= n_samples;
  e_hr_x /= n_samples;
  e_hr_xy /= n_samples;
  e_var /= n_samples;
  e_cov /= n_samples;
  e_ht /= n_samples;

  guarded("srswor-inclusion-identities", [&] {
    const InclusionProbs pi(f.design);
    double sum_first = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < f.design.N; ++i) {
      sum_first += pi.first(i);
      double pair_sum = 0.0;
      for (std::size_t j = 0; j < f.design.N; ++j) {
        if (j != i) pair_sum += pi.second(i, j);
      }
      worst = std::max(worst, std::abs(pair_sum - (f.design.n - 1.0) * pi.first(i)));
    }
    worst = std::max(worst, std::abs(sum_first - static_cast<double>(f.design.n)));
    return CheckResult{"srswor-inclusion-identities", worst <= 1e-12, "max err=" + fmt(worst)};
  });
  guarded("ht-design-unbiased", [&] {
    return check_close("ht-design-unbiased", e_ht, domain_total(f.pop, f.domain), 1e-10);
  });
  guarded("hr-bias-enumeration", [&] {
    return check_close("hr-bias-enumeration", e_hr - domain_total(f.pop, f.domain),
                       hr_bias_true(f.theta, f.pop, f.domain), 1e-10);
  });
  guarded("hr-variance-formula", [&] {
    return check_close("hr-variance-formula", e_hr2 - e_hr * e_hr,
                       hr_var_true(f.theta, f.pop, f.coeffs), 1e-10);
  });
  guarded("hr-variance-estimator-unbiased", [&] {
    return check_close("hr-variance-estimator-unbiased", e_var,
                       hr_var_true(f.theta, f.pop, f.coeffs), 1e-10);
  });
  guarded("design-covariance-formula", [&] {
    return check_close("design-covariance-formula", e_hr_xy - e_hr * e_hr_x,
                       design_cov_true(f.theta, y, x, f.coeffs), 1e-10);
  });
  guarded("design-covariance-estimator-unbiased", [&] {
    return check_close("design-covariance-estimator-unbiased", e_cov,
                       design_cov_true(f.theta, y, x, f.coeffs), 1e-10);
  });

  guarded("remark1-collapses", [&] {
    Rng rng = make_stream(11);
    const Sample s = draw_sample(f.design, rng);
    const auto ys = gather(y, s);
    const ThetaVector ident = theta_from_probs(OrderProbMatrix::identity(f.pop.size()), f.domain);
    const ThetaVector unif = theta_from_probs(OrderProbMatrix::uniform(f.pop.size()), f.domain);
    const Domain all = Domain::whole(f.pop.size());
    const ThetaVector whole = theta_from_probs(OrderProbMatrix::uniform(f.pop.size()), all);
    const double m = static_cast<double>(f.domain.size());
    const double N = static_cast<double>(f.pop.size());
    double worst = std::abs(hr_total(s, ident, ys) - ht_domain_total(s, ys, f.domain).value);
    worst = std::max(worst, std::abs(hr_total(s, unif, ys) - m / N * ht_total(s, ys)));
    worst = std::max(worst, std::abs(hr_total(s, whole, ys) - ht_total(s, ys)));
    return CheckResult{"remark1-collapses", worst <= 1e-12, "max err=" + fmt(worst)};
  });

  guarded("additivity", [&] {
    const EtaModel eta = fit_eta(f.pop.z(), f.pop.x());
    const OrderProbMatrix probs = mc_order_probs(eta, f.pop.z(), 3000, 3);
    const std::vector<Domain> blocks = {Domain({0, 3}, 6), Domain({1, 5}, 6), Domain({2, 4}, 6)};
    double worst = 0.0;
    for_each_subset(6, 3, [&](std::vector<std::size_t> idx) {
      const Sample s = make_sample(f.design, std::move(idx));
      const auto ys = gather(y, s);
      double sum = 0.0;
      for (const auto& b : blocks) sum += hr_total(s, theta_from_probs(probs, b), ys);
      worst = std::max(worst, std::abs(sum - ht_total(s, ys)));
    });
    return CheckResult{"additivity", worst <= 1e-9, "max err=" + fmt(worst)};
  });

  guarded("b0-minimizes-linearized-mse", [&] {
    const auto b0 = b0_true(f.pop, f.theta, f.domain, f.coeffs);
    if (!b0) return CheckResult{"b0-minimizes-linearized-mse", false, "b0 undefined"};
    const double at_b0 = rhr_mse_true(f.pop, f.theta, f.domain, f.coeffs, *b0);
    bool ok = true;
    for (double d = -2.0; d <= 2.0; d += 0.01) {
      if (rhr_mse_true(f.pop, f.theta, f.domain, f.coeffs, *b0 + d) < at_b0 - 1e-9) ok = false;
    }
    return CheckResult{"b0-minimizes-linearized-mse", ok, "b0=" + fmt(*b0)};
  });

  guarded("orderprob-doubly-stochastic", [&] {
    const EtaModel eta = fit_eta(f.pop.z(), f.pop.x());
    const OrderProbMatrix probs = mc_order_probs(eta, f.pop.z(), 10000, 5);
    const double err = std::max(probs.max_row_sum_error(), probs.max_col_sum_error());
    return CheckResult{"orderprob-doubly-stochastic", err <= 1e-9, "max err=" + fmt(err)};
  });

  guarded("orderprob-exact-agreement", [&] {
    const std::vector<double> means = {0.0, 1.0, 2.0};
    const std::vector<double> vars = {1.0, 1.0, 1.0};
    const auto exact = exact_order_probs_small(means, vars);
    EtaModel eta;
    eta.alpha1 = 0.0;
    eta.alpha2 = 1.0;
    eta.tau2 = vars;
    const std::uint64_t R = 200000;
    const OrderProbMatrix probs = mc_order_probs(eta, means, R, 2024);
    double worst = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        const double p = exact[i * 3 + j];
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(R));
        const double err = std::abs(probs.prob(i, j) - p);
        worst = std::max(worst, err / std::max(se, 1e-12));
        if (err > 4.0 * se) ok = false;
      }
    }
    return CheckResult{"orderprob-exact-agreement", ok, "max err/se=" + fmt(worst)};
  });

  if (cache) {
    guarded("orderprob-cache", [&] {
      const OrderProbCache c = load_order_probs(*cache);
      return CheckResult{"orderprob-cache", c.matrix.is_doubly_stochastic(),
                         "N=" + std::to_string(c.matrix.size()) +
                             " R=" + std::to_string(c.matrix.replications())};
    });
  }
  return out;
}

}  // namespace hrsae

#include "hrsae/baselines.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "hrsae/error.hpp"

namespace hrsae {

namespace {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

Vec2 solve2(const Mat2& a, const Vec2& b, const char* what) {
  Eigen::FullPivLU<Mat2> lu(a);
  if (!lu.isInvertible()) throw DegenerateError(std::string(what) + ": singular regression");
  return lu.solve(b);
}

void check_sample(const Sample& sample, std::span<const double> x_pop,
                  std::span<const double> y_on_s, const Domain& domain) {
  if (y_on_s.size() != sample.size()) throw DataError("sample values do not match the sample size");
  if (x_pop.size() != domain.population_size()) {
    throw DataError("auxiliary census and domain refer to different populations");
  }
}

AreaSummary summarize(const Sample& sample, std::span<const double> x_pop,
                      std::span<const double> y_on_s, const Domain& domain, bool in_domain) {
  AreaSummary a;
  double x_total = 0.0;
  for (std::size_t i = 0; i < x_pop.size(); ++i) {
    if (domain.contains(i) == in_domain) {
      ++a.size;
      x_total += x_pop[i];
    }
  }
  a.x_pop_mean = a.size > 0 ? x_total / static_cast<double>(a.size) : 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    if (domain.contains(sample.indices[k]) != in_domain) continue;
    ++a.n_sampled;
    a.y_mean += y_on_s[k];
    a.x_mean += x_pop[sample.indices[k]];
  }
  if (a.n_sampled > 0) {
    a.y_mean /= static_cast<double>(a.n_sampled);
    a.x_mean /= static_cast<double>(a.n_sampled);
  }
  return a;
}

}  // namespace

double simple_synthetic(const Sample& sample, std::span<const double> y_on_s, std::size_t m,
                        std::size_t N) {
  return static_cast<double>(m) / static_cast<double>(N) * ht_total(sample, y_on_s);
}

ModelXi fit_xi(const Sample& sample, std::span<const double> x_on_s, std::span<const double> y_on_s) {
  if (x_on_s.size() != sample.size() || y_on_s.size() != sample.size()) {
    throw DataError("sample values do not match the sample size");
  }
  if (sample.size() < 3) throw DegenerateError("regression needs at least 3 sampled units");
  Mat2 a = Mat2::Zero();
  Vec2 b = Vec2::Zero();
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const Vec2 xk(1.0, x_on_s[k]);
    a += sample.weights[k] * xk * xk.transpose();
    b += sample.weights[k] * xk * y_on_s[k];
  }
  const Vec2 beta = solve2(a, b, "y on x");
  ModelXi fit{beta(0), beta(1), 0.0};
  double sse = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double e = y_on_s[k] - fit.beta1 - fit.beta2 * x_on_s[k];
    sse += e * e;
  }
  fit.sigma2 = sse / static_cast<double>(sample.size() - 2);
  return fit;
}

EstimateReport syn_estimator(const Sample& sample, std::span<const double> x_pop,
                             std::span<const double> y_on_s, const Domain& domain) {
  check_sample(sample, x_pop, y_on_s, domain);
  const auto x_on_s = gather(x_pop, sample);
  const ModelXi fit = fit_xi(sample, x_on_s, y_on_s);
  EstimateReport rep;
  rep.method = Method::SYN;
  rep.point = fit.beta1 * static_cast<double>(domain.size()) + fit.beta2 * domain_sum(x_pop, domain);
  return rep;
}

EstimateReport greg_estimator(const Sample& sample, std::span<const double> x_pop,
                              std::span<const double> y_on_s, const Domain& domain) {
  check_sample(sample, x_pop, y_on_s, domain);
  EstimateReport rep;
  rep.method = Method::GREG;
  const auto x_on_s = gather(x_pop, sample);
  const HtResult ht_y = ht_domain_total(sample, y_on_s, domain);
  if (ht_y.empty_intersection) {
    rep.flags.set(Flag::EmptyIntersection).set(Flag::Unavailable);
    return rep;
  }
  const ModelXi fit = fit_xi(sample, x_on_s, y_on_s);
  const std::vector<double> ones(sample.size(), 1.0);
  const double ht_count = ht_domain_total(sample, ones, domain).value;
  const double ht_x = ht_domain_total(sample, x_on_s, domain).value;
  rep.point = ht_y.value + fit.beta1 * (static_cast<double>(domain.size()) - ht_count) +
              fit.beta2 * (domain_sum(x_pop, domain) - ht_x);
  return rep;
}

double shrinkage_factor(const VarianceComponents& vc, std::size_t n_sampled) {
  if (n_sampled == 0 || vc.sigma2_v <= 0.0) return 0.0;
  return vc.sigma2_v / (vc.sigma2_v + vc.sigma2_e / static_cast<double>(n_sampled));
}

double eblup_area_total(const AreaSummary& area, const std::array<double, 2>& beta, double gamma) {
  const double synthetic = beta[0] + beta[1] * area.x_pop_mean;
  const double residual =
      area.n_sampled > 0 ? area.y_mean - beta[0] - beta[1] * area.x_mean : 0.0;
  return static_cast<double>(area.size) * (synthetic + gamma * residual);
}

EblupFit eblup_with_components(const Sample& sample, std::span<const double> x_pop,
                               std::span<const double> y_on_s, const Domain& domain,
                               const VarianceComponents& components) {
  check_sample(sample, x_pop, y_on_s, domain);
  if (components.sigma2_v < 0.0 || components.sigma2_e < 0.0) {
    throw DataError("variance components must be non-negative");
  }
  EblupFit fit;
  fit.components = components;
  fit.domain = summarize(sample, x_pop, y_on_s, domain, true);
  fit.complement = summarize(sample, x_pop, y_on_s, domain, false);
  fit.gamma_domain = shrinkage_factor(components, fit.domain.n_sampled);
  fit.gamma_complement = shrinkage_factor(components, fit.complement.n_sampled);

  // GLS under the block-diagonal nested-error covariance:
  // X'V^{-1}X is proportional to sum_j x_j x_j' - gamma_d n_d xbar_d xbar_d'.
  Mat2 a = Mat2::Zero();
  Vec2 b = Vec2::Zero();
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const Vec2 xk(1.0, x_pop[sample.indices[k]]);
    a += xk * xk.transpose();
    b += xk * y_on_s[k];
  }
  for (const auto* area : {&fit.domain, &fit.complement}) {
    if (area->n_sampled == 0) continue;
    const double g = area == &fit.domain ? fit.gamma_domain : fit.gamma_complement;
    const double nd = static_cast<double>(area->n_sampled);
    const Vec2 xbar(1.0, area->x_mean);
    a -= g * nd * xbar * xbar.transpose();
    b -= g * nd * xbar * area->y_mean;
  }
  const Vec2 beta = solve2(a, b, "EBLUP");
  fit.beta = {beta(0), beta(1)};
  fit.domain_total = eblup_area_total(fit.domain, fit.beta, fit.gamma_domain);
  return fit;
}

VarianceComponents henderson3(const Sample& sample, std::span<const double> x_pop,
                              std::span<const double> y_on_s, const Domain& domain) {
  check_sample(sample, x_pop, y_on_s, domain);
  const AreaSummary areas[2] = {summarize(sample, x_pop, y_on_s, domain, true),
                                summarize(sample, x_pop, y_on_s, domain, false)};
  std::size_t sampled_areas = 0;
  for (const auto& a : areas) sampled_areas += a.n_sampled > 0 ? 1 : 0;
  if (sampled_areas < 2) {
    throw DegenerateError("variance components need at least 2 sampled areas");
  }
  const std::size_t n = sample.size();

  // Within-area regression on deviations from area means.
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& a = areas[domain.contains(sample.indices[k]) ? 0 : 1];
    const double dx = x_pop[sample.indices[k]] - a.x_mean;
    const double dy = y_on_s[k] - a.y_mean;
    sxx += dx * dx;
    sxy += dx * dy;
  }
  const bool has_within_x = sxx > 0.0;
  const double slope_w = has_within_x ? sxy / sxx : 0.0;
  const std::size_t df_within = sampled_areas + (has_within_x ? 1 : 0);
  if (n <= df_within) throw DegenerateError("too few sampled units for the within-area fit");
  double sse_within = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& a = areas[domain.contains(sample.indices[k]) ? 0 : 1];
    const double e =
        y_on_s[k] - a.y_mean - slope_w * (x_pop[sample.indices[k]] - a.x_mean);
    sse_within += e * e;
  }
  VarianceComponents vc;
  vc.sigma2_e = sse_within / static_cast<double>(n - df_within);

  // Ordinary least squares ignoring the area effect.
  Mat2 xtx = Mat2::Zero();
  Vec2 xty = Vec2::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 xk(1.0, x_pop[sample.indices[k]]);
    xtx += xk * xk.transpose();
    xty += xk * y_on_s[k];
  }
  const Vec2 beta = solve2(xtx, xty, "variance components");
  double sse_ols = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = y_on_s[k] - beta(0) - beta(1) * x_pop[sample.indices[k]];
    sse_ols += e * e;
  }
  Mat2 between = Mat2::Zero();
  for (const auto& a : areas) {
    if (a.n_sampled == 0) continue;
    const Vec2 xbar(1.0, a.x_mean);
    const double nd = static_cast<double>(a.n_sampled);
    between += nd * nd * xbar * xbar.transpose();
  }
  const double n_star = static_cast<double>(n) - (xtx.inverse() * between).trace();
  if (!(n_star > 0.0)) throw DegenerateError("variance components: n* is not positive");
  vc.sigma2_v =
      std::max(0.0, (sse_ols - static_cast<double>(n - 2) * vc.sigma2_e) / n_star);
  return vc;
}

EstimateReport eblup_estimator(const Sample& sample, std::span<const double> x_pop,
                               std::span<const double> y_on_s, const Domain& domain) {
  EstimateReport rep;
  rep.method = Method::EBLUP;
  VarianceComponents vc;
  try {
    vc = henderson3(sample, x_pop, y_on_s, domain);
  } catch (const DegenerateError&) {
    EstimateReport syn = syn_estimator(sample, x_pop, y_on_s, domain);
    rep.point = syn.point;
    rep.flags.set(Flag::SyntheticFallback);
    return rep;
  }
  const EblupFit fit = eblup_with_components(sample, x_pop, y_on_s, domain, vc);
  rep.point = fit.domain_total;
  return rep;
}

}  // namespace hrsae

#pragma once

#include <array>
#include <span>

#include "hrsae/datamodel.hpp"
#include "hrsae/estimators.hpp"
#include "hrsae/sampling.hpp"

// Comparison estimators. None of them sees the size variable z.

namespace hrsae {

/// (m/N) sum_{i in s} d_i y_i
double simple_synthetic(const Sample& sample, std::span<const double> y_on_s, std::size_t m,
                        std::size_t N);

/// Survey-weighted least squares of y on (1, x) over the whole sample.
ModelXi fit_xi(const Sample& sample, std::span<const double> x_on_s, std::span<const double> y_on_s);

/// Regression-synthetic: beta1 m + beta2 t_xD with beta from the whole sample.
EstimateReport syn_estimator(const Sample& sample, std::span<const double> x_pop,
                             std::span<const double> y_on_s, const Domain& domain);

/// Direct domain GREG with beta from the whole sample:
/// HT_D(y) + beta' (t_D(1, x) - HT_D(1, x)). Unavailable when s and D do not meet.
EstimateReport greg_estimator(const Sample& sample, std::span<const double> x_pop,
                              std::span<const double> y_on_s, const Domain& domain);

struct VarianceComponents {
  double sigma2_v = 0.0;  // between-area
  double sigma2_e = 0.0;  // within-area
};

/// Sampled-unit summary of one area.
struct AreaSummary {
  std::size_t n_sampled = 0;
  std::size_t size = 0;      // population units in the area
  double y_mean = 0.0;       // sample means (0 when n_sampled = 0)
  double x_mean = 0.0;
  double x_pop_mean = 0.0;   // known population mean of x
};

/// gamma = s2v / (s2v + s2e / n_d); 0 for unsampled areas or s2v = 0.
double shrinkage_factor(const VarianceComponents& vc, std::size_t n_sampled);

/// m [ Xbar' beta + gamma (ybar - xbar' beta) ] for one area.
double eblup_area_total(const AreaSummary& area, const std::array<double, 2>& beta, double gamma);

struct EblupFit {
  VarianceComponents components;
  std::array<double, 2> beta{};
  AreaSummary domain;
  AreaSummary complement;
  double gamma_domain = 0.0;
  double gamma_complement = 0.0;
  double domain_total = 0.0;
  Flags flags;
};

/// Two-area (D and its complement) nested-error EBLUP for given components.
EblupFit eblup_with_components(const Sample& sample, std::span<const double> x_pop,
                               std::span<const double> y_on_s, const Domain& domain,
                               const VarianceComponents& components);

/// Henderson method-3 (fitting-of-constants) variance components; negative
/// between-area estimates are truncated at 0. Throws DegenerateError when the
/// components cannot be estimated.
VarianceComponents henderson3(const Sample& sample, std::span<const double> x_pop,
                              std::span<const double> y_on_s, const Domain& domain);

/// Full EBLUP; falls back to the synthetic estimate (flagged) when the
/// components are not estimable.
EstimateReport eblup_estimator(const Sample& sample, std::span<const double> x_pop,
                               std::span<const double> y_on_s, const Domain& domain);

}  // namespace hrsae

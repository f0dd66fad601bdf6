#include "hrsae/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "format.hpp"
#include "hrsae/error.hpp"

namespace hrsae {

namespace {

void check_aligned(const Sample& sample, const ThetaVector& theta, std::span<const double> y_on_s) {
  if (y_on_s.size() != sample.size()) throw DataError("sample values do not match the sample size");
  if (!sample.indices.empty() && sample.indices.back() >= theta.size()) {
    throw DataError("theta does not cover every sampled unit");
  }
}

/// theta_i * values_i over the population.
std::vector<double> theta_weighted(const ThetaVector& theta, std::span<const double> values) {
  if (values.size() != theta.size()) throw DataError("theta and population sizes differ");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = theta[i] * values[i];
  return out;
}

/// theta_i * values_k over the sample.
std::vector<double> theta_weighted_on_s(const Sample& sample, const ThetaVector& theta,
                                        std::span<const double> on_s) {
  std::vector<double> out(on_s.size());
  for (std::size_t k = 0; k < on_s.size(); ++k) out[k] = theta[sample.indices[k]] * on_s[k];
  return out;
}

std::optional<double> safe_ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  const double r = num / den;
  if (!std::isfinite(r)) return std::nullopt;
  return r;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::HT: return "HT";
    case Method::HR: return "HR";
    case Method::HR1: return "HR1";
    case Method::RHR: return "RHR";
    case Method::SimpleSyn: return "SIMPLE";
    case Method::SYN: return "SYN";
    case Method::GREG: return "GREG";
    case Method::EBLUP: return "EBLUP";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ht") return Method::HT;
  if (s == "hr") return Method::HR;
  if (s == "hr1") return Method::HR1;
  if (s == "rhr") return Method::RHR;
  if (s == "simple" || s == "simple-syn") return Method::SimpleSyn;
  if (s == "syn") return Method::SYN;
  if (s == "greg") return Method::GREG;
  if (s == "eblup") return Method::EBLUP;
  throw UsageError("unknown method '" + name + "'");
}

std::string Flags::to_string() const {
  static constexpr std::pair<Flag, const char*> kNames[] = {
      {Flag::EmptyIntersection, "empty-intersection"},
      {Flag::ClampedVariance, "clamped-variance"},
      {Flag::UndefinedBiasCorrelation, "undefined-bias-correlation"},
      {Flag::UndefinedRatio, "undefined-ratio"},
      {Flag::UndefinedB0, "undefined-b0"},
      {Flag::Unavailable, "unavailable"},
      {Flag::SyntheticFallback, "synthetic-fallback"},
  };
  std::string out;
  for (const auto& [flag, name] : kNames) {
    if (!has(flag)) continue;
    if (!out.empty()) out += ';';
    out += name;
  }
  return out;
}

std::string report_csv_header() { return "method,point,var_hat,bias_hat,mse_hat,flags"; }

std::string to_csv_row(const EstimateReport& r) {
  using detail::format_optional;
  return to_string(r.method) + ',' + format_optional(r.point) + ',' + format_optional(r.var_hat) +
         ',' + format_optional(r.bias_hat) + ',' + format_optional(r.mse_hat) + ',' +
         r.flags.to_string();
}

std::string to_json(const EstimateReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["method"] = to_string(r.method);
  j["point"] = opt(r.point);
  j["var_hat"] = opt(r.var_hat);
  j["bias_hat"] = opt(r.bias_hat);
  j["mse_hat"] = opt(r.mse_hat);
  j["flags"] = r.flags.to_string();
  return j.dump();
}

double hr_total(const Sample& sample, const ThetaVector& theta, std::span<const double> y_on_s) {
  check_aligned(sample, theta, y_on_s);
  double t = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    t += theta[sample.indices[k]] * sample.weights[k] * y_on_s[k];
  }
  return t;
}

double hr_size(const Sample& sample, const ThetaVector& theta) {
  double t = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) t += theta[sample.indices[k]] * sample.weights[k];
  return t;
}

std::optional<double> hr1_ratio(const Sample& sample, const ThetaVector& theta,
                                std::span<const double> y_on_s, std::size_t m) {
  const double denom = hr_size(sample, theta);
  auto r = safe_ratio(hr_total(sample, theta, y_on_s), denom);
  if (!r) return std::nullopt;
  return static_cast<double>(m) * *r;
}

EstimateReport hr1_report(const Sample& sample, const ThetaVector& theta,
                          std::span<const double> y_on_s, std::size_t m) {
  EstimateReport rep;
  rep.method = Method::HR1;
  rep.point = hr1_ratio(sample, theta, y_on_s, m);
  if (!rep.point) rep.flags.set(Flag::UndefinedRatio);
  return rep;
}

double hr_bias_true(const ThetaVector& theta, std::span<const double> values, const Domain& domain) {
  if (values.size() != theta.size()) throw DataError("theta and population sizes differ");
  double weighted = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) weighted += theta[i] * values[i];
  return weighted - domain_sum(values, domain);
}

double hr_bias_true(const ThetaVector& theta, const Population& pop, const Domain& domain) {
  return hr_bias_true(theta, pop.y(), domain);
}

std::optional<double> hr_bias_est(const Sample& sample, const ThetaVector& theta,
                                  std::span<const double> y_on_s, double rho_xz, std::size_t m,
                                  std::size_t N) {
  check_aligned(sample, theta, y_on_s);
  if (rho_xz == 0.0) return std::nullopt;
  const double rho2 = rho_xz * rho_xz;
  const double share = static_cast<double>(m) / static_cast<double>(N);
  double s = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    s += (share - theta[sample.indices[k]]) * sample.weights[k] * y_on_s[k];
  }
  return (1.0 - rho2) / rho2 * s;
}

double hr_var_true(const ThetaVector& theta, const Population& pop, const DesignCoeffs& coeffs) {
  const auto ty = theta_weighted(theta, pop.y());
  return coeffs.population_form(ty, ty);
}

double hr_var_est(const Sample& sample, const ThetaVector& theta, std::span<const double> y_on_s,
                  const DesignCoeffs& coeffs) {
  check_aligned(sample, theta, y_on_s);
  const auto ty = theta_weighted_on_s(sample, theta, y_on_s);
  return coeffs.sample_form(ty, ty);
}

AccuracyTruth hr_accuracy_true(const ThetaVector& theta, const Population& pop,
                               const Domain& domain, const DesignCoeffs& coeffs) {
  AccuracyTruth t;
  t.variance = hr_var_true(theta, pop, coeffs);
  t.bias = hr_bias_true(theta, pop, domain);
  t.mse = t.variance + t.bias * t.bias;
  return t;
}

EstimateReport hr_mse_est(const Sample& sample, const ThetaVector& theta,
                          std::span<const double> y_on_s, const DesignCoeffs& coeffs,
                          double rho_xz, std::size_t m, std::size_t N) {
  EstimateReport rep;
  rep.method = Method::HR;
  rep.point = hr_total(sample, theta, y_on_s);
  const double var = hr_var_est(sample, theta, y_on_s, coeffs);
  rep.var_hat = var;
  rep.bias_hat = hr_bias_est(sample, theta, y_on_s, rho_xz, m, N);
  if (!rep.bias_hat) rep.flags.set(Flag::UndefinedBiasCorrelation);
  double mse = var;
  if (var < 0.0) {
    mse = 0.0;
    rep.flags.set(Flag::ClampedVariance);
  }
  if (rep.bias_hat) mse += *rep.bias_hat * *rep.bias_hat;
  rep.mse_hat = mse;
  return rep;
}

double design_cov_true(const ThetaVector& theta, std::span<const double> u_pop,
                       std::span<const double> v_pop, const DesignCoeffs& coeffs) {
  const auto tu = theta_weighted(theta, u_pop);
  const auto tv = theta_weighted(theta, v_pop);
  return coeffs.population_form(tu, tv);
}

double design_cov_est(const Sample& sample, const ThetaVector& theta,
                      std::span<const double> u_on_s, std::span<const double> v_on_s,
                      const DesignCoeffs& coeffs) {
  check_aligned(sample, theta, u_on_s);
  check_aligned(sample, theta, v_on_s);
  const auto tu = theta_weighted_on_s(sample, theta, u_on_s);
  const auto tv = theta_weighted_on_s(sample, theta, v_on_s);
  return coeffs.sample_form(tu, tv);
}

RhrTruth rhr_truth(const Population& pop, const ThetaVector& theta, const Domain& domain,
                   const DesignCoeffs& coeffs) {
  RhrTruth t;
  const auto y = pop.y();
  const auto x = pop.x();
  t.var_y = design_cov_true(theta, y, y, coeffs);
  t.var_x = design_cov_true(theta, x, x, coeffs);
  t.cov_yx = design_cov_true(theta, y, x, coeffs);
  t.bias_y = hr_bias_true(theta, y, domain);
  t.bias_x = hr_bias_true(theta, x, domain);
  t.b0 = safe_ratio(t.cov_yx + t.bias_y * t.bias_x, t.var_x + t.bias_x * t.bias_x);
  return t;
}

std::optional<double> b0_true(const Population& pop, const ThetaVector& theta,
                              const Domain& domain, const DesignCoeffs& coeffs) {
  return rhr_truth(pop, theta, domain, coeffs).b0;
}

RhrEstimates rhr_estimates(const Sample& sample, const ThetaVector& theta,
                           std::span<const double> y_on_s, std::span<const double> x_on_s,
                           const DesignCoeffs& coeffs, double rho_xz, std::size_t m,
                           std::size_t N) {
  RhrEstimates e;
  e.hr_y = hr_total(sample, theta, y_on_s);
  e.hr_x = hr_total(sample, theta, x_on_s);
  e.var_y = design_cov_est(sample, theta, y_on_s, y_on_s, coeffs);
  e.var_x = design_cov_est(sample, theta, x_on_s, x_on_s, coeffs);
  e.cov_yx = design_cov_est(sample, theta, y_on_s, x_on_s, coeffs);
  e.bias_y = hr_bias_est(sample, theta, y_on_s, rho_xz, m, N);
  e.bias_x = hr_bias_est(sample, theta, x_on_s, rho_xz, m, N);
  if (!e.bias_y || !e.bias_x) e.flags.set(Flag::UndefinedBiasCorrelation);
  const double by = e.bias_y.value_or(0.0);
  const double bx = e.bias_x.value_or(0.0);
  e.b0 = safe_ratio(e.cov_yx + by * bx, e.var_x + bx * bx);
  if (!e.b0) e.flags.set(Flag::UndefinedB0);
  return e;
}

std::optional<double> b0_hat(const Sample& sample, const ThetaVector& theta,
                             std::span<const double> y_on_s, std::span<const double> x_on_s,
                             const DesignCoeffs& coeffs, double rho_xz, std::size_t m,
                             std::size_t N) {
  return rhr_estimates(sample, theta, y_on_s, x_on_s, coeffs, rho_xz, m, N).b0;
}

double rhr_combine(double hr_y, double hr_x, double t_xD, double b) {
  return hr_y + b * (t_xD - hr_x);
}

double rhr_total(const Sample& sample, const ThetaVector& theta, std::span<const double> y_on_s,
                 std::span<const double> x_on_s, double t_xD, const DesignCoeffs& coeffs,
                 double rho_xz, std::size_t m, std::size_t N, Flags* flags) {
  const RhrEstimates e = rhr_estimates(sample, theta, y_on_s, x_on_s, coeffs, rho_xz, m, N);
  if (flags) *flags |= e.flags;
  if (!e.b0) return e.hr_y;
  return rhr_combine(e.hr_y, e.hr_x, t_xD, *e.b0);
}

double rhr_mse_from(const RhrTruth& t, double b) {
  const double bias = t.bias_y - b * t.bias_x;
  return t.var_y + b * b * t.var_x - 2.0 * b * t.cov_yx + bias * bias;
}

double rhr_mse_true(const Population& pop, const ThetaVector& theta, const Domain& domain,
                    const DesignCoeffs& coeffs, std::optional<double> b) {
  const RhrTruth t = rhr_truth(pop, theta, domain, coeffs);
  const double coef = b ? *b : t.b0.value_or(0.0);
  return rhr_mse_from(t, coef);
}

EstimateReport rhr_mse_est(const Sample& sample, const ThetaVector& theta,
                           std::span<const double> y_on_s, std::span<const double> x_on_s,
                           double t_xD, const DesignCoeffs& coeffs, double rho_xz, std::size_t m,
                           std::size_t N) {
  const RhrEstimates e = rhr_estimates(sample, theta, y_on_s, x_on_s, coeffs, rho_xz, m, N);
  EstimateReport rep;
  rep.method = Method::RHR;
  rep.flags = e.flags;
  const double b = e.b0.value_or(0.0);
  rep.point = rhr_combine(e.hr_y, e.hr_x, t_xD, b);
  const double var = e.var_y + b * b * e.var_x - 2.0 * b * e.cov_yx;
  rep.var_hat = var;
  double mse = var;
  if (var < 0.0) {
    mse = 0.0;
    rep.flags.set(Flag::ClampedVariance);
  }
  if (e.bias_y && e.bias_x) {
    rep.bias_hat = *e.bias_y - b * *e.bias_x;
    mse += *rep.bias_hat * *rep.bias_hat;
  }
  rep.mse_hat = mse;
  return rep;
}

CompositionDiagnostic composition_diagnostic(const Sample& sample, const ThetaVector& theta,
                                             std::span<const double> y_on_s, const Domain& domain,
                                             double rho_xz, std::size_t N) {
  CompositionDiagnostic d;
  d.hr = hr_total(sample, theta, y_on_s);
  const HtResult ht = ht_domain_total(sample, y_on_s, domain);
  d.empty_intersection = ht.empty_intersection;
  const double synthetic =
      static_cast<double>(domain.size()) / static_cast<double>(N) * ht_total(sample, y_on_s);
  const double rho2 = rho_xz * rho_xz;
  d.blend = rho2 * ht.value + (1.0 - rho2) * synthetic;
  d.gap = d.hr - d.blend;
  return d;
}

}  // namespace hrsae

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "hrsae/datamodel.hpp"
#include "hrsae/orderprob.hpp"
#include "hrsae/sampling.hpp"

namespace hrsae {

enum class Method { HT, HR, HR1, RHR, SimpleSyn, SYN, GREG, EBLUP };

std::string to_string(Method m);
/// Accepts the lower-case names used on the command line (ht, hr, hr1, rhr,
/// simple, syn, greg, eblup).
Method parse_method(const std::string& name);

enum class Flag : std::uint32_t {
  EmptyIntersection = 1u << 0,
  ClampedVariance = 1u << 1,
  UndefinedBiasCorrelation = 1u << 2,
  UndefinedRatio = 1u << 3,
  UndefinedB0 = 1u << 4,
  Unavailable = 1u << 5,
  SyntheticFallback = 1u << 6,
};

class Flags {
 public:
  constexpr Flags() = default;
  constexpr Flags(Flag f) : bits_(static_cast<std::uint32_t>(f)) {}

  constexpr bool has(Flag f) const { return (bits_ & static_cast<std::uint32_t>(f)) != 0; }
  constexpr Flags& set(Flag f) {
    bits_ |= static_cast<std::uint32_t>(f);
    return *this;
  }
  constexpr Flags& operator|=(Flags o) {
    bits_ |= o.bits_;
    return *this;
  }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint32_t bits() const { return bits_; }
  friend constexpr bool operator==(Flags, Flags) = default;

  /// Semicolon-separated flag names, e.g. "empty-intersection;clamped-variance".
  std::string to_string() const;

 private:
  std::uint32_t bits_ = 0;
};

/// One estimator's output for one sample. Absent fields were not computed or
/// are undefined (see flags).
struct EstimateReport {
  Method method = Method::HR;
  std::optional<double> point;
  std::optional<double> var_hat;
  std::optional<double> bias_hat;
  std::optional<double> mse_hat;
  Flags flags;
};

std::string report_csv_header();
std::string to_csv_row(const EstimateReport& r);
std::string to_json(const EstimateReport& r);

struct AccuracyTruth {
  double variance = 0.0;
  double bias = 0.0;
  double mse = 0.0;
};

// --- HR estimator -----------------------------------------------------------

/// sum_{i in s} theta_i d_i y_i
double hr_total(const Sample& sample, const ThetaVector& theta, std::span<const double> y_on_s);

/// sum_{i in s} theta_i d_i, the HR estimate of the domain size.
double hr_size(const Sample& sample, const ThetaVector& theta);

/// m * HR(y) / HR(1); nullopt when HR(1) = 0.
std::optional<double> hr1_ratio(const Sample& sample, const ThetaVector& theta,
                                std::span<const double> y_on_s, std::size_t m);

/// sum_U theta_i y_i - sum_D y_i, exact for fixed theta.
double hr_bias_true(const ThetaVector& theta, const Population& pop, const Domain& domain);
double hr_bias_true(const ThetaVector& theta, std::span<const double> values, const Domain& domain);

/// ((1 - rho^2) / rho^2) sum_{i in s} (m/N - theta_i) d_i y_i; nullopt when rho = 0.
std::optional<double> hr_bias_est(const Sample& sample, const ThetaVector& theta,
                                  std::span<const double> y_on_s, double rho_xz, std::size_t m,
                                  std::size_t N);

double hr_var_true(const ThetaVector& theta, const Population& pop, const DesignCoeffs& coeffs);

/// Raw (possibly negative) unbiased variance estimate.
double hr_var_est(const Sample& sample, const ThetaVector& theta, std::span<const double> y_on_s,
                  const DesignCoeffs& coeffs);

AccuracyTruth hr_accuracy_true(const ThetaVector& theta, const Population& pop,
                               const Domain& domain, const DesignCoeffs& coeffs);

EstimateReport hr_mse_est(const Sample& sample, const ThetaVector& theta,
                          std::span<const double> y_on_s, const DesignCoeffs& coeffs,
                          double rho_xz, std::size_t m, std::size_t N);

/// HR1 point estimate packaged as a report.
EstimateReport hr1_report(const Sample& sample, const ThetaVector& theta,
                          std::span<const double> y_on_s, std::size_t m);

// --- design covariances -----------------------------------------------------

/// sum_{i,j in U} theta_i theta_j a_ij u_i v_j
double design_cov_true(const ThetaVector& theta, std::span<const double> u_pop,
                       std::span<const double> v_pop, const DesignCoeffs& coeffs);

/// sum_{i,j in s} theta_i theta_j a~_ij u_i v_j
double design_cov_est(const Sample& sample, const ThetaVector& theta,
                      std::span<const double> u_on_s, std::span<const double> v_on_s,
                      const DesignCoeffs& coeffs);

// --- RHR estimator ----------------------------------------------------------

/// Population-level ingredients of the regression-type estimator.
struct RhrTruth {
  double var_y = 0.0;  // Var HR(y)
  double var_x = 0.0;  // V_x
  double cov_yx = 0.0; // C_yx
  double bias_y = 0.0; // B_y
  double bias_x = 0.0; // B_x
  std::optional<double> b0;
};

RhrTruth rhr_truth(const Population& pop, const ThetaVector& theta, const Domain& domain,
                   const DesignCoeffs& coeffs);

/// (C_yx + B_y B_x) / (V_x + B_x^2); nullopt when the denominator vanishes.
std::optional<double> b0_true(const Population& pop, const ThetaVector& theta,
                              const Domain& domain, const DesignCoeffs& coeffs);

/// Sample-level ingredients; bias terms are absent when rho_xz = 0.
struct RhrEstimates {
  double hr_y = 0.0;
  double hr_x = 0.0;
  double var_y = 0.0;
  double var_x = 0.0;
  double cov_yx = 0.0;
  std::optional<double> bias_y;
  std::optional<double> bias_x;
  std::optional<double> b0;
  Flags flags;
};

RhrEstimates rhr_estimates(const Sample& sample, const ThetaVector& theta,
                           std::span<const double> y_on_s, std::span<const double> x_on_s,
                           const DesignCoeffs& coeffs, double rho_xz, std::size_t m,
                           std::size_t N);

std::optional<double> b0_hat(const Sample& sample, const ThetaVector& theta,
                             std::span<const double> y_on_s, std::span<const double> x_on_s,
                             const DesignCoeffs& coeffs, double rho_xz, std::size_t m,
                             std::size_t N);

/// HR(y) + b (t_xD - HR(x)).
double rhr_combine(double hr_y, double hr_x, double t_xD, double b);

/// RHR point estimate; falls back to HR with UndefinedB0 when b0 is undefined.
double rhr_total(const Sample& sample, const ThetaVector& theta, std::span<const double> y_on_s,
                 std::span<const double> x_on_s, double t_xD, const DesignCoeffs& coeffs,
                 double rho_xz, std::size_t m, std::size_t N, Flags* flags = nullptr);

/// Linearized MSE Var_y + b^2 V_x - 2 b C_yx + (B_y - b B_x)^2 at b (default b0).
double rhr_mse_true(const Population& pop, const ThetaVector& theta, const Domain& domain,
                    const DesignCoeffs& coeffs, std::optional<double> b = std::nullopt);
double rhr_mse_from(const RhrTruth& t, double b);

/// Point estimate plus the estimated linearized MSE.
EstimateReport rhr_mse_est(const Sample& sample, const ThetaVector& theta,
                           std::span<const double> y_on_s, std::span<const double> x_on_s,
                           double t_xD, const DesignCoeffs& coeffs, double rho_xz, std::size_t m,
                           std::size_t N);

// --- diagnostics ------------------------------------------------------------

struct CompositionDiagnostic {
  double hr = 0.0;
  double blend = 0.0;  // rho^2 HT_D + (1 - rho^2) simple synthetic
  double gap = 0.0;    // hr - blend
  bool empty_intersection = false;
};

CompositionDiagnostic composition_diagnostic(const Sample& sample, const ThetaVector& theta,
                                             std::span<const double> y_on_s, const Domain& domain,
                                             double rho_xz, std::size_t N);

}  // namespace hrsae

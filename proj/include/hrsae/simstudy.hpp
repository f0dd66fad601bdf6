#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrsae/datamodel.hpp"
#include "hrsae/estimators.hpp"
#include "hrsae/orderprob.hpp"
#include "hrsae/rng.hpp"

namespace hrsae {

enum class PopulationType { P1, P2 };
enum class ResponseCase { A, B, C };
enum class ThetaBackend { MonteCarlo, Indicator };

std::string to_string(PopulationType p);
std::string to_string(ResponseCase c);
std::string to_string(ThetaBackend b);

struct ScenarioConfig {
  PopulationType population_type = PopulationType::P1;
  ResponseCase response_case = ResponseCase::A;
  std::size_t N = 500;
  std::size_t m = 50;
  std::size_t n = 75;
  std::vector<double> rho_xz_targets;
  std::vector<double> rho_yx_targets;
  std::size_t mc_samples = 1000;
  std::uint64_t orderprob_R = 1000000;
  std::uint64_t seed = 0;
  ThetaBackend theta_backend = ThetaBackend::MonteCarlo;

  // Optional keys.
  VarianceMode variance_mode = VarianceMode::Pooled;
  ErrorLaw error_law = ErrorLaw::Normal;
  /// Generate z from x instead of x from z (one auxiliary variable only).
  bool single_auxiliary = false;
  double calibration_tolerance = 0.005;

  void validate() const;
  /// Estimator the MSE ratios are taken against: HR for P1 / case B, RHR otherwise.
  Method reference() const;
};

/// Parses the JSON config; unknown keys and missing required keys are
/// UsageErrors naming the key.
ScenarioConfig parse_scenario_config(const std::string& json_text);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);
std::string scenario_config_json(const ScenarioConfig& config);

/// z for N units; the first m entries belong to the domain.
std::vector<double> gen_z(PopulationType type, std::size_t N, std::size_t m, Rng& rng);

struct Calibrated {
  std::vector<double> values;
  double achieved_rho = 0.0;
  double noise_variance = 0.0;
  std::size_t attempts = 0;
};

/// Noise variance giving Corr(base + noise, base) = rho on average.
double noise_variance_for_rho(std::span<const double> base, double target_rho);

/// x = z + N(0, tau^2), redrawn until |corr(x, z) - target| <= tolerance.
Calibrated calibrate_tau_for_rho(std::span<const double> z, double target_rho, double tolerance,
                                 Rng& rng, std::size_t max_attempts = 10000);

/// y under response case A/B/C, with sigma^2 calibrated against target rho_yx.
/// `in_domain[i]` marks domain units.
Calibrated gen_y(ResponseCase response_case, std::span<const double> x,
                 std::span<const char> in_domain, double target_rho_yx, double tolerance,
                 Rng& rng, std::size_t max_attempts = 10000);

/// Synthetic size variable z = x + N(0, tau^2) for the single-auxiliary mode.
Calibrated synth_z_from_x(std::span<const double> x, double target_rho_xz, double tolerance,
                          Rng& rng, std::size_t max_attempts = 10000);

struct MseCell {
  double rho_xz = 0.0;
  double rho_yx = 0.0;
  double achieved_rho_xz = 0.0;
  double achieved_rho_yx = 0.0;
  double true_total = 0.0;
  std::map<Method, double> mse;
  std::map<Method, std::size_t> unavailable;  // samples with no estimate
  std::map<Method, double> mean_estimate;
  double hr_bias_true = 0.0;
  double mean_composition_gap = 0.0;
  std::optional<std::string> error;  // set when the cell aborted
};

struct MseTable {
  PopulationType population_type = PopulationType::P1;
  ResponseCase response_case = ResponseCase::A;
  Method reference = Method::RHR;
  std::vector<MseCell> cells;

  /// Cells in which each method beats the reference.
  std::map<Method, std::size_t> win_counts() const;
  /// Long format: population,case,rho_xz,rho_yx,method,mse,ratio_vs_reference,flags
  std::string to_csv() const;
};

/// Methods evaluated in every cell, in output order.
std::span<const Method> simulated_methods();

struct RunOptions {
  std::size_t threads = 1;
};

MseTable run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

}  // namespace hrsae

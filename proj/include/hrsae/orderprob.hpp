#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hrsae/datamodel.hpp"

namespace hrsae {

enum class ErrorLaw { Normal, EmpiricalResidual };
enum class VarianceMode { Pooled, Binned };

/// Fitted size model x = alpha1 + alpha2 z + delta with Var(delta_i) = tau2[i].
struct EtaModel {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::vector<double> tau2;
  ErrorLaw error_law = ErrorLaw::Normal;
  /// Centered OLS residuals scaled to unit variance; resampled under
  /// ErrorLaw::EmpiricalResidual. Empty when the fit is exact.
  std::vector<double> standardized_residuals;

  void validate() const;
  /// Stable 64-bit digest of the parameters, used to key cache files.
  std::uint64_t hash(std::span<const double> z) const;
};

/// OLS of x on z plus residual variances. Binned mode uses equal-count
/// z-bins, max(5, N/50) of them, capped so every bin holds at least 2 units.
EtaModel fit_eta(std::span<const double> z, std::span<const double> x,
                 VarianceMode mode = VarianceMode::Pooled, ErrorLaw law = ErrorLaw::Normal);

/// Monte-Carlo estimate of p_ij = P{X_i has rank j}, stored as integer
/// counts so every row and column sums to exactly R.
class OrderProbMatrix {
 public:
  OrderProbMatrix(std::size_t n_units, std::uint64_t replications, std::vector<std::uint64_t> counts);

  /// p_ij = I{i = j}: sizes keep the order of z exactly.
  static OrderProbMatrix identity(std::size_t n_units);
  /// p_ij = 1/N for every entry.
  static OrderProbMatrix uniform(std::size_t n_units);

  std::size_t size() const noexcept { return n_; }
  std::uint64_t replications() const noexcept { return r_; }
  std::uint64_t count(std::size_t i, std::size_t j) const { return counts_[i * n_ + j]; }
  double prob(std::size_t i, std::size_t j) const {
    return static_cast<double>(counts_[i * n_ + j]) / static_cast<double>(r_);
  }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

  double max_row_sum_error() const;
  double max_col_sum_error() const;
  bool is_doubly_stochastic(double tol = 1e-9) const;

 private:
  std::size_t n_;
  std::uint64_t r_;
  std::vector<std::uint64_t> counts_;
};

struct McOptions {
  std::size_t threads = 1;
  /// Replications per rng stream. Streams are numbered by chunk, so the
  /// result does not depend on the thread count.
  std::uint64_t chunk = 4096;
};

OrderProbMatrix mc_order_probs(const EtaModel& eta, std::span<const double> z,
                               std::uint64_t replications, std::uint64_t seed,
                               const McOptions& options = {});

/// Exact p_ij for independent normals X_i ~ N(means[i], variances[i]), N <= 7.
/// Row-major N x N.
std::vector<double> exact_order_probs_small(std::span<const double> means,
                                            std::span<const double> variances);

struct ThetaVector {
  std::vector<double> theta;
  std::size_t domain_size = 0;

  std::size_t size() const noexcept { return theta.size(); }
  double operator[](std::size_t i) const { return theta[i]; }
};

ThetaVector theta_from_probs(const OrderProbMatrix& probs, const Domain& domain);

/// Wraps an arbitrary vector, checking 0 <= theta <= 1 and sum = m.
ThetaVector make_theta(std::vector<double> theta, std::size_t domain_size, double tol = 1e-9);

ThetaVector theta_indicator_approx(std::span<const double> z, const Domain& domain,
                                   const EtaModel& eta, double a0);

/// Strict sign changes in theta[i+1] - theta[i]; zero differences are skipped.
std::size_t count_sign_changes(std::span<const double> theta);

struct A0Selection {
  double a0 = 0.0;
  std::size_t sign_changes = 0;
  std::size_t steps = 0;
};

/// Walks a0 = 0.01, 0.02, ... and stops at the first value whose theta
/// sequence changes sign fewer than 4 times. Throws NoConvergenceError after
/// `max_steps` grid points.
A0Selection select_a0(std::span<const double> z, const Domain& domain, const EtaModel& eta,
                      std::size_t max_steps = 10000);

/// Binary cache: magic, N, R, seed, model hash, then row-major u64 counts.
struct OrderProbCache {
  OrderProbMatrix matrix;
  std::uint64_t seed = 0;
  std::uint64_t model_hash = 0;
};

void save_order_probs(const std::filesystem::path& path, const OrderProbMatrix& matrix,
                      std::uint64_t seed, std::uint64_t model_hash);
/// Loads and rechecks double stochasticity; throws DataError on a corrupt file.
OrderProbCache load_order_probs(const std::filesystem::path& path);

}  // namespace hrsae

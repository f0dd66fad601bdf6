#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hrsae/datamodel.hpp"
#include "hrsae/rng.hpp"

namespace hrsae {

enum class DesignKind { SRSWOR };

struct DesignSpec {
  DesignKind kind = DesignKind::SRSWOR;
  std::size_t n = 0;  // sample size
  std::size_t N = 0;  // population size

  static DesignSpec srswor(std::size_t n, std::size_t N);
  void validate() const;
};

/// First- and second-order inclusion probabilities of a design.
class InclusionProbs {
 public:
  explicit InclusionProbs(const DesignSpec& design);

  double first(std::size_t i) const;
  /// pi_ij; pi_ii = pi_i.
  double second(std::size_t i, std::size_t j) const;

 private:
  DesignSpec design_;
  double pi_ = 0.0;
  double pi_pair_ = 0.0;
};

InclusionProbs inclusion_probs(const DesignSpec& design);

/// Drawn sample: unit indices in increasing order with design weights d_i = 1/pi_i.
struct Sample {
  std::vector<std::size_t> indices;
  std::vector<double> weights;

  std::size_t size() const noexcept { return indices.size(); }
};

/// Builds a sample from explicit unit indices (used for loaded samples and
/// for enumeration).
Sample make_sample(const DesignSpec& design, std::vector<std::size_t> indices);

Sample draw_sample(const DesignSpec& design, Rng& rng);

/// Gathers `values` (population order) at the sample units.
std::vector<double> gather(std::span<const double> values, const Sample& sample);

struct HtResult {
  double value = 0.0;
  bool empty_intersection = false;
};

/// Direct Horvitz-Thompson total over s intersected with D.
HtResult ht_domain_total(const Sample& sample, std::span<const double> y_on_s, const Domain& domain);

/// Whole-population HT total.
double ht_total(const Sample& sample, std::span<const double> y_on_s);

/// Number of sample units falling in the domain.
std::size_t domain_hits(const Sample& sample, const Domain& domain);

/// a_ij = d_i d_j pi_ij - 1 (a_ii = d_i - 1) and a~_ij = a_ij / pi_ij.
///
/// Under SRSWOR each coefficient takes one value on the diagonal and another
/// off it, so bilinear forms reduce to O(N) sums.
class DesignCoeffs {
 public:
  explicit DesignCoeffs(const DesignSpec& design);

  double a(std::size_t i, std::size_t j) const { return i == j ? a_diag_ : a_off_; }
  double a_tilde(std::size_t i, std::size_t j) const { return i == j ? at_diag_ : at_off_; }

  double a_diag() const noexcept { return a_diag_; }
  double a_off() const noexcept { return a_off_; }
  double a_tilde_diag() const noexcept { return at_diag_; }
  double a_tilde_off() const noexcept { return at_off_; }

  /// sum_{i,j} a_ij p_i q_j over the full index range of p and q.
  double population_form(std::span<const double> p, std::span<const double> q) const;
  /// sum_{i,j in s} a~_ij p_i q_j for vectors aligned with the sample.
  double sample_form(std::span<const double> p, std::span<const double> q) const;

 private:
  double a_diag_ = 0.0;
  double a_off_ = 0.0;
  double at_diag_ = 0.0;
  double at_off_ = 0.0;
};

DesignCoeffs design_coeffs(const DesignSpec& design);

}  // namespace hrsae

#include "hrsae/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "hrsae/error.hpp"

namespace hrsae {

DesignSpec DesignSpec::srswor(std::size_t n, std::size_t N) {
  DesignSpec d{DesignKind::SRSWOR, n, N};
  d.validate();
  return d;
}

void DesignSpec::validate() const {
  if (kind != DesignKind::SRSWOR) throw UsageError("unsupported sampling design");
  if (n < 1 || n > N) {
    throw DataError("sample size n=" + std::to_string(n) + " must satisfy 1 <= n <= N=" +
                    std::to_string(N));
  }
}

InclusionProbs::InclusionProbs(const DesignSpec& design) : design_(design) {
  design.validate();
  const double n = static_cast<double>(design.n);
  const double N = static_cast<double>(design.N);
  pi_ = n / N;
  pi_pair_ = design.N > 1 ? n * (n - 1.0) / (N * (N - 1.0)) : pi_;
}

double InclusionProbs::first(std::size_t) const { return pi_; }

double InclusionProbs::second(std::size_t i, std::size_t j) const {
  return i == j ? pi_ : pi_pair_;
}

InclusionProbs inclusion_probs(const DesignSpec& design) { return InclusionProbs(design); }

Sample make_sample(const DesignSpec& design, std::vector<std::size_t> indices) {
  design.validate();
  std::sort(indices.begin(), indices.end());
  if (indices.size() != design.n) {
    throw DataError("sample has " + std::to_string(indices.size()) + " units, design expects n=" +
                    std::to_string(design.n));
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= design.N) throw DataError("sample unit outside population");
    if (k > 0 && indices[k] == indices[k - 1]) throw DataError("duplicate unit in sample");
  }
  const double d = static_cast<double>(design.N) / static_cast<double>(design.n);
  Sample s;
  s.weights.assign(indices.size(), d);
  s.indices = std::move(indices);
  return s;
}

Sample draw_sample(const DesignSpec& design, Rng& rng) {
  design.validate();
  std::vector<std::size_t> all(design.N);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(design.n);
  // Selection sampling over a forward range keeps the output sorted.
  std::sample(all.begin(), all.end(), std::back_inserter(picked), design.n, rng);
  return make_sample(design, std::move(picked));
}

std::vector<double> gather(std::span<const double> values, const Sample& sample) {
  std::vector<double> out;
  out.reserve(sample.size());
  for (auto i : sample.indices) out.push_back(values[i]);
  return out;
}

HtResult ht_domain_total(const Sample& sample, std::span<const double> y_on_s,
                         const Domain& domain) {
  HtResult r;
  r.empty_intersection = true;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    if (domain.contains(sample.indices[k])) {
      r.value += sample.weights[k] * y_on_s[k];
      r.empty_intersection = false;
    }
  }
  return r;
}

double ht_total(const Sample& sample, std::span<const double> y_on_s) {
  double t = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) t += sample.weights[k] * y_on_s[k];
  return t;
}

std::size_t domain_hits(const Sample& sample, const Domain& domain) {
  return static_cast<std::size_t>(std::count_if(sample.indices.begin(), sample.indices.end(),
                                                [&](std::size_t i) { return domain.contains(i); }));
}

DesignCoeffs::DesignCoeffs(const DesignSpec& design) {
  const InclusionProbs pi(design);
  const double p1 = pi.first(0);
  const double d = 1.0 / p1;
  a_diag_ = d - 1.0;
  at_diag_ = a_diag_ / p1;
  if (design.N > 1) {
    const double p2 = pi.second(0, 1);
    a_off_ = d * d * p2 - 1.0;
    // With n = 1 no pair is ever observed together; a~ is never evaluated off
    // the diagonal on a sample.
    at_off_ = p2 > 0.0 ? a_off_ / p2 : 0.0;
  }
}

double DesignCoeffs::population_form(std::span<const double> p, std::span<const double> q) const {
  double sp = 0.0, sq = 0.0, spq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sq += q[i];
    spq += p[i] * q[i];
  }
  return a_off_ * sp * sq + (a_diag_ - a_off_) * spq;
}

double DesignCoeffs::sample_form(std::span<const double> p, std::span<const double> q) const {
  double sp = 0.0, sq = 0.0, spq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sq += q[i];
    spq += p[i] * q[i];
  }
  return at_off_ * sp * sq + (at_diag_ - at_off_) * spq;
}

DesignCoeffs design_coeffs(const DesignSpec& design) { return DesignCoeffs(design); }

}  // namespace hrsae

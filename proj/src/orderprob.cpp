#include "hrsae/orderprob.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hrsae/error.hpp"
#include "hrsae/rng.hpp"

namespace hrsae {

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ull;

  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 0x100000001b3ull;
    }
  }
  void value(double v) { bytes(&v, sizeof v); }
  void value(std::uint64_t v) { bytes(&v, sizeof v); }
  void values(std::span<const double> v) {
    value(static_cast<std::uint64_t>(v.size()));
    for (double e : v) value(e);
  }
};

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  std::vector<double> residuals;
};

LinearFit ols(std::span<const double> z, std::span<const double> x) {
  const double n = static_cast<double>(z.size());
  const double mz = std::accumulate(z.begin(), z.end(), 0.0) / n;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double szz = 0.0, szx = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    szz += (z[i] - mz) * (z[i] - mz);
    szx += (z[i] - mz) * (x[i] - mx);
  }
  if (!(szz > 0.0)) throw DegenerateError("size model: z is constant, slope not identifiable");
  LinearFit fit;
  fit.slope = szx / szz;
  fit.intercept = mx - fit.slope * mz;
  fit.residuals.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    fit.residuals[i] = x[i] - fit.intercept - fit.slope * z[i];
  }
  return fit;
}

double normal_pdf(double t, double mean, double sd) {
  const double u = (t - mean) / sd;
  return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
}

double normal_cdf(double t, double mean, double sd) {
  return 0.5 * std::erfc(-(t - mean) / (sd * std::sqrt(2.0)));
}

constexpr std::array<char, 8> kCacheMagic = {'H', 'R', 'S', 'A', 'E', 'P', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<unsigned char, 8> b{};
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  out.write(reinterpret_cast<const char*>(b.data()), 8);
}

bool read_u64(std::istream& in, std::uint64_t& v) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) return false;
  v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return true;
}

}  // namespace

void EtaModel::validate() const {
  if (!std::isfinite(alpha1) || !std::isfinite(alpha2)) {
    throw DataError("size model coefficients must be finite");
  }
  for (double t : tau2) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DataError("size model variances must be >= 0");
  }
}

std::uint64_t EtaModel::hash(std::span<const double> z) const {
  Fnv1a f;
  f.value(alpha1);
  f.value(alpha2);
  f.values(tau2);
  f.value(static_cast<std::uint64_t>(error_law));
  f.values(standardized_residuals);
  f.values(z);
  return f.h;
}

EtaModel fit_eta(std::span<const double> z, std::span<const double> x, VarianceMode mode,
                 ErrorLaw law) {
  const std::size_t n = z.size();
  if (x.size() != n) throw DataError("fit_eta: z and x differ in length");
  if (n < 3) throw DataError("fit_eta needs at least 3 units");

  const LinearFit fit = ols(z, x);
  EtaModel eta;
  eta.alpha1 = fit.intercept;
  eta.alpha2 = fit.slope;
  eta.error_law = law;

  double sse = 0.0;
  for (double r : fit.residuals) sse += r * r;

  if (mode == VarianceMode::Pooled) {
    eta.tau2.assign(n, sse / static_cast<double>(n - 2));
  } else {
    std::size_t bins = std::max<std::size_t>(5, n / 50);
    bins = std::clamp<std::size_t>(bins, 1, n / 2);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return z[a] < z[b]; });
    eta.tau2.assign(n, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t lo = b * n / bins;
      const std::size_t hi = (b + 1) * n / bins;
      double mean = 0.0;
      for (std::size_t k = lo; k < hi; ++k) mean += fit.residuals[order[k]];
      mean /= static_cast<double>(hi - lo);
      double ss = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        const double d = fit.residuals[order[k]] - mean;
        ss += d * d;
      }
      const double var = ss / static_cast<double>(hi - lo - 1);
      for (std::size_t k = lo; k < hi; ++k) eta.tau2[order[k]] = var;
    }
  }

  // Residuals below rounding noise count as an exact fit.
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  const double noise_floor = 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(n);
  if (sse <= noise_floor) {
    std::fill(eta.tau2.begin(), eta.tau2.end(), 0.0);
  } else {
    const double mean =
        std::accumulate(fit.residuals.begin(), fit.residuals.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double r : fit.residuals) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    eta.standardized_residuals.reserve(n);
    for (double r : fit.residuals) eta.standardized_residuals.push_back((r - mean) / sd);
  }
  return eta;
}

OrderProbMatrix::OrderProbMatrix(std::size_t n_units, std::uint64_t replications,
                                 std::vector<std::uint64_t> counts)
    : n_(n_units), r_(replications), counts_(std::move(counts)) {
  if (n_ == 0) throw DataError("order-probability matrix needs at least one unit");
  if (r_ == 0) throw DataError("order-probability matrix needs R >= 1");
  if (counts_.size() != n_ * n_) throw DataError("order-probability counts have wrong size");
}

OrderProbMatrix OrderProbMatrix::identity(std::size_t n_units) {
  std::vector<std::uint64_t> c(n_units * n_units, 0);
  for (std::size_t i = 0; i < n_units; ++i) c[i * n_units + i] = 1;
  return OrderProbMatrix(n_units, 1, std::move(c));
}

OrderProbMatrix OrderProbMatrix::uniform(std::size_t n_units) {
  return OrderProbMatrix(n_units, n_units, std::vector<std::uint64_t>(n_units * n_units, 1));
}

double OrderProbMatrix::max_row_sum_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j) s += prob(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

double OrderProbMatrix::max_col_sum_error() const {
  double worst = 0.0;
  for (std::size_t j = 0; j < n_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += prob(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

bool OrderProbMatrix::is_doubly_stochastic(double tol) const {
  return max_row_sum_error() <= tol && max_col_sum_error() <= tol;
}

OrderProbMatrix mc_order_probs(const EtaModel& eta, std::span<const double> z,
                               std::uint64_t replications, std::uint64_t seed,
                               const McOptions& options) {
  eta.validate();
  const std::size_t n = z.size();
  if (eta.tau2.size() != n) throw DataError("size model variances do not match population size");
  if (replications < 1) throw UsageError("number of replications R must be >= 1");
  if (n > std::numeric_limits<std::uint32_t>::max()) throw DataError("population too large");
  const bool empirical =
      eta.error_law == ErrorLaw::EmpiricalResidual && !eta.standardized_residuals.empty();

  std::vector<double> mean(n), sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    mean[i] = eta.alpha1 + eta.alpha2 * z[i];
    sd[i] = std::sqrt(eta.tau2[i]);
  }

  const std::uint64_t chunk = std::max<std::uint64_t>(1, options.chunk);
  const std::uint64_t n_chunks = (replications + chunk - 1) / chunk;
  const std::size_t workers = static_cast<std::size_t>(
      std::clamp<std::uint64_t>(options.threads, 1, n_chunks));

  std::atomic<std::uint64_t> next{0};
  std::vector<std::vector<std::uint64_t>> partial(workers);

  auto work = [&](std::size_t w) {
    auto& counts = partial[w];
    counts.assign(n * n, 0);
    std::vector<std::pair<double, std::uint32_t>> keyed(n);
    for (std::uint64_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) {
      Rng rng = make_stream(seed, {c});
      std::normal_distribution<double> gauss;
      std::uniform_int_distribution<std::size_t> pick(
          0, empirical ? eta.standardized_residuals.size() - 1 : 0);
      const std::uint64_t begin = c * chunk;
      const std::uint64_t end = std::min(replications, begin + chunk);
      for (std::uint64_t r = begin; r < end; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
          const double e = empirical ? eta.standardized_residuals[pick(rng)] : gauss(rng);
          keyed[i] = {mean[i] + sd[i] * e, static_cast<std::uint32_t>(i)};
        }
        // Pair ordering breaks ties in the simulated value by unit index.
        std::sort(keyed.begin(), keyed.end());
        for (std::size_t rank = 0; rank < n; ++rank) ++counts[keyed[rank].second * n + rank];
      }
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  std::vector<std::uint64_t> total(n * n, 0);
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += p[k];
  }
  return OrderProbMatrix(n, replications, std::move(total));
}

std::vector<double> exact_order_probs_small(std::span<const double> means,
                                            std::span<const double> variances) {
  const std::size_t n = means.size();
  if (variances.size() != n) throw DataError("means and variances differ in length");
  if (n == 0) throw DataError("need at least one variable");
  if (n > 7) throw UsageError("exact order probabilities are limited to N <= 7");
  std::vector<double> sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(variances[i] > 0.0)) throw DegenerateError("exact order probabilities need variances > 0");
    sd[i] = std::sqrt(variances[i]);
  }

  // P{X_i has rank j} = integral of f_i(t) P{exactly j of the others fall below t} dt.
  // The inner probability is a Poisson-binomial term computed by dynamic programming.
  std::vector<double> out(n * n, 0.0);
  std::vector<double> dist(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto below_count = [&](double t) {
      std::fill(dist.begin(), dist.end(), 0.0);
      dist[0] = 1.0;
      std::size_t seen = 0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i) continue;
        const double q = normal_cdf(t, means[k], sd[k]);
        for (std::size_t c = seen + 1; c > 0; --c) dist[c] = dist[c] * (1.0 - q) + dist[c - 1] * q;
        dist[0] *= 1.0 - q;
        ++seen;
      }
    };
    const double lo = means[i] - 12.0 * sd[i];
    const double hi = means[i] + 12.0 * sd[i];
    for (std::size_t j = 0; j < n; ++j) {
      auto integrand = [&](double t) {
        below_count(t);
        return normal_pdf(t, means[i], sd[i]) * dist[j];
      };
      out[i * n + j] = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
          integrand, lo, hi, 20, 1e-13);
    }
  }
  return out;
}

ThetaVector theta_from_probs(const OrderProbMatrix& probs, const Domain& domain) {
  if (probs.size() != domain.population_size()) {
    throw DataError("order-probability matrix and domain refer to different populations");
  }
  const std::size_t n = probs.size();
  ThetaVector t;
  t.domain_size = domain.size();
  t.theta.resize(n);
  const double r = static_cast<double>(probs.replications());
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t c = 0;
    for (auto j : domain.members()) c += probs.count(i, j);
    t.theta[i] = static_cast<double>(c) / r;
  }
  return t;
}

ThetaVector make_theta(std::vector<double> theta, std::size_t domain_size, double tol) {
  double sum = 0.0;
  for (double v : theta) {
    if (!(v >= -tol && v <= 1.0 + tol)) throw DataError("theta entries must lie in [0, 1]");
    sum += v;
  }
  if (std::abs(sum - static_cast<double>(domain_size)) > tol * std::max<double>(1.0, domain_size)) {
    throw DataError("theta entries must sum to the domain size");
  }
  return ThetaVector{std::move(theta), domain_size};
}

ThetaVector theta_indicator_approx(std::span<const double> z, const Domain& domain,
                                   const EtaModel& eta, double a0) {
  eta.validate();
  const std::size_t n = z.size();
  if (eta.tau2.size() != n || domain.population_size() != n) {
    throw DataError("indicator theta: inputs refer to different populations");
  }
  if (!(eta.alpha2 > 0.0)) {
    throw DegenerateError("indicator theta requires a positive size-model slope");
  }
  if (!(a0 > 0.0)) throw UsageError("bandwidth a0 must be positive");

  const double m = static_cast<double>(domain.size());
  const double scale = a0 / eta.alpha2;
  std::vector<double> raw(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t hits = 0;
    for (auto j : domain.members()) {
      if (std::abs(z[j] - z[i]) <= scale * std::sqrt(eta.tau2[j] + eta.tau2[i])) ++hits;
    }
    raw[i] = m * static_cast<double>(hits);
    total += raw[i];
  }
  if (!(total > 0.0)) throw DegenerateError("indicator theta: bandwidth selects no units");

  // Normalize to sum m, then clip at 1 and spread the excess over the
  // remaining units until nothing exceeds 1.
  std::vector<double> theta(n);
  std::vector<char> clipped(n, 0);
  for (int pass = 0; pass < 100; ++pass) {
    double free_raw = 0.0;
    std::size_t n_clipped = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (clipped[i]) {
        ++n_clipped;
      } else {
        free_raw += raw[i];
      }
    }
    const double c = free_raw > 0.0 ? (m - static_cast<double>(n_clipped)) / free_raw : 0.0;
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      theta[i] = clipped[i] ? 1.0 : c * raw[i];
      if (!clipped[i] && theta[i] > 1.0 + 1e-10) {
        clipped[i] = 1;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (double& v : theta) v = std::min(v, 1.0);
  return ThetaVector{std::move(theta), domain.size()};
}

std::size_t count_sign_changes(std::span<const double> theta) {
  std::size_t changes = 0;
  int last = 0;
  for (std::size_t i = 0; i + 1 < theta.size(); ++i) {
    const double d = theta[i + 1] - theta[i];
    const int sign = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if (sign == 0) continue;
    if (last != 0 && sign != last) ++changes;
    last = sign;
  }
  return changes;
}

A0Selection select_a0(std::span<const double> z, const Domain& domain, const EtaModel& eta,
                      std::size_t max_steps) {
  A0Selection sel;
  for (std::size_t k = 1; k <= max_steps; ++k) {
    sel.a0 = 0.01 * static_cast<double>(k);
    sel.steps = k;
    const ThetaVector t = theta_indicator_approx(z, domain, eta, sel.a0);
    sel.sign_changes = count_sign_changes(t.theta);
    if (sel.sign_changes < 4) return sel;
  }
  throw NoConvergenceError("a0 search did not converge within " + std::to_string(max_steps) +
                               " steps (last a0=" + std::to_string(sel.a0) +
                               ", sign changes=" + std::to_string(sel.sign_changes) + ")",
                           sel.a0, sel.sign_changes);
}

void save_order_probs(const std::filesystem::path& path, const OrderProbMatrix& matrix,
                      std::uint64_t seed, std::uint64_t model_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write order-probability cache " + path.string());
  out.write(kCacheMagic.data(), kCacheMagic.size());
  write_u64(out, matrix.size());
  write_u64(out, matrix.replications());
  write_u64(out, seed);
  write_u64(out, model_hash);
  for (auto c : matrix.counts()) write_u64(out, c);
  if (!out) throw DataError("failed writing order-probability cache " + path.string());
}

OrderProbCache load_order_probs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open order-probability cache " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCacheMagic) {
    throw DataError("not an order-probability cache: " + path.string());
  }
  std::uint64_t n = 0, r = 0, seed = 0, hash = 0;
  if (!read_u64(in, n) || !read_u64(in, r) || !read_u64(in, seed) || !read_u64(in, hash)) {
    throw DataError("truncated order-probability cache header");
  }
  if (n == 0 || r == 0 || n > (1u << 20)) throw DataError("invalid order-probability cache header");
  std::vector<std::uint64_t> counts(n * n);
  for (auto& c : counts) {
    if (!read_u64(in, c)) throw DataError("truncated order-probability cache body");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes in order-probability cache");
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t row = 0, col = 0;
    for (std::uint64_t j = 0; j < n; ++j) {
      row += counts[i * n + j];
      col += counts[j * n + i];
    }
    if (row != r || col != r) {
      throw DataError("order-probability cache is not doubly stochastic (unit/rank " +
                      std::to_string(i + 1) + ")");
    }
  }
  return OrderProbCache{OrderProbMatrix(n, r, std::move(counts)), seed, hash};
}

}  // namespace hrsae

#include "hrsae/simstudy.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "format.hpp"
#include "hrsae/baselines.hpp"
#include "hrsae/error.hpp"
#include "hrsae/sampling.hpp"

namespace hrsae {

namespace {

using nlohmann::json;

constexpr Method kMethods[] = {Method::HR,        Method::HR1, Method::RHR, Method::SimpleSyn,
                               Method::SYN,       Method::GREG, Method::EBLUP};

void check_target(double rho, const char* what) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw UsageError(std::string(what) + " target must lie in (0, 1), got " + std::to_string(rho));
  }
}

double covariance(std::span<const double> u, std::span<const double> v) {
  const double n = static_cast<double>(u.size());
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - mu) * (v[i] - mv);
  return s / n;
}

/// values = signal + sqrt(scale_i * var) * eps, redrawn until corr(values, anchor)
/// is within tolerance of the target.
Calibrated rejection_loop(std::span<const double> signal, std::span<const double> scale,
                          std::span<const double> anchor, double noise_var, double target,
                          double tolerance, Rng& rng, std::size_t max_attempts,
                          const char* what) {
  Calibrated out;
  out.noise_variance = noise_var;
  out.values.resize(signal.size());
  std::normal_distribution<double> gauss;
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    for (std::size_t i = 0; i < signal.size(); ++i) {
      out.values[i] = signal[i] + std::sqrt(scale[i] * noise_var) * gauss(rng);
    }
    double rho = 0.0;
    try {
      rho = finite_pop_corr(out.values, anchor);
    } catch (const DegenerateError&) {
      continue;
    }
    if (std::abs(rho - target) <= tolerance) {
      out.achieved_rho = rho;
      out.attempts = attempt;
      return out;
    }
  }
  throw NumericError(std::string(what) + ": no realization within " + std::to_string(tolerance) +
                     " of target " + std::to_string(target) + " after " +
                     std::to_string(max_attempts) + " attempts");
}

template <class Enum>
Enum parse_enum(const json& j, const char* key, std::initializer_list<std::pair<const char*, Enum>> options) {
  if (!j.is_string()) throw UsageError(std::string("config key '") + key + "' must be a string");
  const auto s = j.get<std::string>();
  for (const auto& [name, value] : options) {
    if (s == name) return value;
  }
  throw UsageError(std::string("config key '") + key + "' has invalid value '" + s + "'");
}

std::uint64_t parse_count(const json& j, const char* key) {
  if (!j.is_number_unsigned()) {
    throw UsageError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

std::vector<double> parse_targets(const json& j, const char* key) {
  if (!j.is_array() || j.empty()) {
    throw UsageError(std::string("config key '") + key + "' must be a non-empty array");
  }
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) throw UsageError(std::string("config key '") + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

std::string to_string(PopulationType p) { return p == PopulationType::P1 ? "P1" : "P2"; }

std::string to_string(ResponseCase c) {
  switch (c) {
    case ResponseCase::A: return "A";
    case ResponseCase::B: return "B";
    case ResponseCase::C: return "C";
  }
  return "?";
}

std::string to_string(ThetaBackend b) {
  return b == ThetaBackend::MonteCarlo ? "montecarlo" : "indicator";
}

void ScenarioConfig::validate() const {
  if (N < 3) throw UsageError("N must be at least 3");
  if (m < 1 || m >= N) throw UsageError("m must satisfy 1 <= m < N");
  if (n < 3 || n > N) throw UsageError("n must satisfy 3 <= n <= N");
  if (rho_xz_targets.empty() || rho_yx_targets.empty()) throw UsageError("empty correlation grid");
  for (double r : rho_xz_targets) check_target(r, "rho_xz");
  for (double r : rho_yx_targets) check_target(r, "rho_yx");
  if (mc_samples < 1) throw UsageError("mc_samples must be >= 1");
  if (theta_backend == ThetaBackend::MonteCarlo && orderprob_R < 1) {
    throw UsageError("orderprob_R must be >= 1");
  }
  if (!(calibration_tolerance > 0.0)) throw UsageError("calibration_tolerance must be positive");
}

Method ScenarioConfig::reference() const {
  return population_type == PopulationType::P1 && response_case == ResponseCase::B ? Method::HR
                                                                                   : Method::RHR;
}

ScenarioConfig parse_scenario_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");

  static const std::set<std::string> required = {
      "population_type", "case", "N", "m", "n", "rho_xz_targets", "rho_yx_targets",
      "mc_samples", "orderprob_R", "seed", "theta_backend"};
  static const std::set<std::string> optional = {"variance_mode", "error_law", "single_auxiliary",
                                                 "calibration_tolerance"};
  for (const auto& [key, value] : j.items()) {
    if (!required.count(key) && !optional.count(key)) {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  for (const auto& key : required) {
    if (!j.contains(key)) throw UsageError("missing config key '" + key + "'");
  }

  ScenarioConfig c;
  c.population_type = parse_enum<PopulationType>(
      j["population_type"], "population_type", {{"P1", PopulationType::P1}, {"P2", PopulationType::P2}});
  c.response_case = parse_enum<ResponseCase>(
      j["case"], "case", {{"A", ResponseCase::A}, {"B", ResponseCase::B}, {"C", ResponseCase::C}});
  c.N = parse_count(j["N"], "N");
  c.m = parse_count(j["m"], "m");
  c.n = parse_count(j["n"], "n");
  c.rho_xz_targets = parse_targets(j["rho_xz_targets"], "rho_xz_targets");
  c.rho_yx_targets = parse_targets(j["rho_yx_targets"], "rho_yx_targets");
  c.mc_samples = parse_count(j["mc_samples"], "mc_samples");
  c.orderprob_R = parse_count(j["orderprob_R"], "orderprob_R");
  c.seed = parse_count(j["seed"], "seed");
  c.theta_backend = parse_enum<ThetaBackend>(
      j["theta_backend"], "theta_backend",
      {{"montecarlo", ThetaBackend::MonteCarlo}, {"indicator", ThetaBackend::Indicator}});
  if (j.contains("variance_mode")) {
    c.variance_mode = parse_enum<VarianceMode>(
        j["variance_mode"], "variance_mode",
        {{"pooled", VarianceMode::Pooled}, {"binned", VarianceMode::Binned}});
  }
  if (j.contains("error_law")) {
    c.error_law = parse_enum<ErrorLaw>(
        j["error_law"], "error_law",
        {{"normal", ErrorLaw::Normal}, {"empirical", ErrorLaw::EmpiricalResidual}});
  }
  if (j.contains("single_auxiliary")) {
    if (!j["single_auxiliary"].is_boolean()) {
      throw UsageError("config key 'single_auxiliary' must be a boolean");
    }
    c.single_auxiliary = j["single_auxiliary"].get<bool>();
  }
  if (j.contains("calibration_tolerance")) {
    if (!j["calibration_tolerance"].is_number()) {
      throw UsageError("config key 'calibration_tolerance' must be a number");
    }
    c.calibration_tolerance = j["calibration_tolerance"].get<double>();
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_config(ss.str());
}

std::string scenario_config_json(const ScenarioConfig& c) {
  json j;
  j["population_type"] = to_string(c.population_type);
  j["case"] = to_string(c.response_case);
  j["N"] = c.N;
  j["m"] = c.m;
  j["n"] = c.n;
  j["rho_xz_targets"] = c.rho_xz_targets;
  j["rho_yx_targets"] = c.rho_yx_targets;
  j["mc_samples"] = c.mc_samples;
  j["orderprob_R"] = c.orderprob_R;
  j["seed"] = c.seed;
  j["theta_backend"] = to_string(c.theta_backend);
  j["variance_mode"] = c.variance_mode == VarianceMode::Pooled ? "pooled" : "binned";
  j["error_law"] = c.error_law == ErrorLaw::Normal ? "normal" : "empirical";
  j["single_auxiliary"] = c.single_auxiliary;
  j["calibration_tolerance"] = c.calibration_tolerance;
  return j.dump(2);
}

std::vector<double> gen_z(PopulationType type, std::size_t N, std::size_t m, Rng& rng) {
  if (m >= N) throw UsageError("domain size must be smaller than the population");
  std::vector<double> z(N);
  if (type == PopulationType::P1) {
    std::normal_distribution<double> inside(4.0, 1.0);
    std::normal_distribution<double> outside(6.0, std::sqrt(1.25));
    for (std::size_t i = 0; i < N; ++i) z[i] = i < m ? inside(rng) : outside(rng);
  } else {
    std::exponential_distribution<double> expo(1.0);
    for (std::size_t i = 0; i < N; ++i) z[i] = (i < m ? 1.0 : 2.0) * expo(rng);
  }
  return z;
}

double noise_variance_for_rho(std::span<const double> base, double target_rho) {
  check_target(target_rho, "correlation");
  const double r2 = target_rho * target_rho;
  return population_variance(base) * (1.0 - r2) / r2;
}

Calibrated calibrate_tau_for_rho(std::span<const double> z, double target_rho, double tolerance,
                                 Rng& rng, std::size_t max_attempts) {
  const double tau2 = noise_variance_for_rho(z, target_rho);
  if (!(population_variance(z) > 0.0)) throw DegenerateError("z is constant");
  const std::vector<double> ones(z.size(), 1.0);
  return rejection_loop(z, ones, z, tau2, target_rho, tolerance, rng, max_attempts,
                        "x calibration");
}

Calibrated synth_z_from_x(std::span<const double> x, double target_rho_xz, double tolerance,
                          Rng& rng, std::size_t max_attempts) {
  const double tau2 = noise_variance_for_rho(x, target_rho_xz);
  if (!(population_variance(x) > 0.0)) throw DegenerateError("x is constant");
  const std::vector<double> ones(x.size(), 1.0);
  return rejection_loop(x, ones, x, tau2, target_rho_xz, tolerance, rng, max_attempts,
                        "z synthesis");
}

Calibrated gen_y(ResponseCase response_case, std::span<const double> x,
                 std::span<const char> in_domain, double target_rho_yx, double tolerance,
                 Rng& rng, std::size_t max_attempts) {
  check_target(target_rho_yx, "rho_yx");
  if (in_domain.size() != x.size()) throw DataError("domain mask does not match x");
  const std::size_t n = x.size();
  std::vector<double> signal(n), scale(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double slope = response_case == ResponseCase::B && in_domain[i] ? 1.25 : 1.0;
    signal[i] = 2.0 + slope * x[i];
    if (response_case == ResponseCase::C && in_domain[i]) scale[i] = 3.0;
  }
  // corr(y, x)^2 = Cov(s, x)^2 / (Var x (Var s + sigma^2 mean(c))).
  const double var_x = population_variance(x);
  if (!(var_x > 0.0)) throw DegenerateError("x is constant");
  const double cov_sx = covariance(signal, x);
  const double r2 = target_rho_yx * target_rho_yx;
  const double ceiling = std::abs(cov_sx) / std::sqrt(var_x * population_variance(signal));
  if (target_rho_yx > ceiling + tolerance) {
    throw NumericError("y calibration: target " + std::to_string(target_rho_yx) +
                       " exceeds the noiseless correlation " + std::to_string(ceiling));
  }
  const double mean_scale = std::accumulate(scale.begin(), scale.end(), 0.0) / static_cast<double>(n);
  const double sigma2 =
      std::max(0.0, cov_sx * cov_sx / (var_x * r2) - population_variance(signal)) / mean_scale;
  return rejection_loop(signal, scale, x, sigma2, target_rho_yx, tolerance, rng, max_attempts,
                        "y calibration");
}

std::span<const Method> simulated_methods() { return kMethods; }

std::map<Method, std::size_t> MseTable::win_counts() const {
  std::map<Method, std::size_t> wins;
  for (const auto& cell : cells) {
    if (cell.error) continue;
    auto ref = cell.mse.find(reference);
    if (ref == cell.mse.end()) continue;
    for (const auto& [method, mse] : cell.mse) {
      if (method != reference && mse < ref->second) ++wins[method];
    }
  }
  return wins;
}

std::string MseTable::to_csv() const {
  using detail::format_double;
  std::string out = "population,case,rho_xz,rho_yx,method,mse,ratio_vs_reference,flags\n";
  const std::string prefix_pc = to_string(population_type) + ',' + to_string(response_case) + ',';
  for (const auto& cell : cells) {
    const std::string prefix =
        prefix_pc + format_double(cell.rho_xz) + ',' + format_double(cell.rho_yx) + ',';
    const auto ref = cell.mse.find(reference);
    for (Method method : kMethods) {
      out += prefix + to_string(method) + ',';
      std::string flags;
      auto add_flag = [&flags](const std::string& f) {
        if (!flags.empty()) flags += ';';
        flags += f;
      };
      if (cell.error) add_flag("cell-error");
      if (method == reference) add_flag("reference");
      auto un = cell.unavailable.find(method);
      if (un != cell.unavailable.end() && un->second > 0) {
        add_flag("unavailable-samples=" + std::to_string(un->second));
      }
      auto it = cell.mse.find(method);
      if (it != cell.mse.end()) {
        out += format_double(it->second);
        out += ',';
        if (ref != cell.mse.end() && ref->second > 0.0) out += format_double(it->second / ref->second);
      } else {
        if (!cell.error) add_flag("unavailable");
        out += ',';
      }
      out += ',' + flags + '\n';
    }
  }
  return out;
}

namespace {

struct RowModel {
  std::vector<double> z;       // input (unsorted) order, first m in the domain
  std::vector<double> x;
  double achieved_rho_xz = 0.0;
  std::optional<ThetaVector> theta;  // sorted-population order
  std::optional<std::string> error;
};

void run_cell(const ScenarioConfig& config, const RowModel& row, std::size_t row_index,
              std::size_t col_index, std::size_t cell_id, MseCell& cell) {
  cell.rho_xz = config.rho_xz_targets[row_index];
  cell.rho_yx = config.rho_yx_targets[col_index];
  cell.achieved_rho_xz = row.achieved_rho_xz;
  if (row.error) {
    cell.error = row.error;
    return;
  }
  try {
    const std::size_t N = config.N;
    const std::size_t m = config.m;
    std::vector<char> mask(N, 0);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(m), 1);

    Rng y_rng = make_stream(config.seed, {3, row_index, col_index});
    Calibrated y = gen_y(config.response_case, row.x, mask, cell.rho_yx,
                         config.calibration_tolerance, y_rng);
    cell.achieved_rho_yx = y.achieved_rho;

    const Population pop = Population::from_unsorted(row.z, row.x, std::move(y.values));
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < N; ++k) {
      if (pop.source_row(k) < m) members.push_back(k);
    }
    const Domain domain(std::move(members), N);
    const ThetaVector& theta = *row.theta;
    const DesignSpec design = DesignSpec::srswor(config.n, N);
    const DesignCoeffs coeffs(design);
    const double rho_xz = finite_pop_corr(pop.x(), pop.z());
    const double t_yD = domain_total(pop, domain);
    const double t_xD = domain_sum(pop.x(), domain);
    cell.true_total = t_yD;
    cell.hr_bias_true = hr_bias_true(theta, pop, domain);

    std::map<Method, double> sq, sum;
    std::map<Method, std::size_t> used;
    double gap_sum = 0.0;
    for (std::size_t s = 0; s < config.mc_samples; ++s) {
      Rng rng = make_stream(config.seed, {5, cell_id, s});
      const Sample sample = draw_sample(design, rng);
      const auto y_s = gather(pop.y(), sample);
      const auto x_s = gather(pop.x(), sample);

      std::map<Method, std::optional<double>> est;
      est[Method::HR] = hr_total(sample, theta, y_s);
      est[Method::HR1] = hr1_ratio(sample, theta, y_s, m);
      est[Method::RHR] = rhr_total(sample, theta, y_s, x_s, t_xD, coeffs, rho_xz, m, N);
      est[Method::SimpleSyn] = simple_synthetic(sample, y_s, m, N);
      est[Method::SYN] = syn_estimator(sample, pop.x(), y_s, domain).point;
      est[Method::GREG] = greg_estimator(sample, pop.x(), y_s, domain).point;
      est[Method::EBLUP] = eblup_estimator(sample, pop.x(), y_s, domain).point;
      gap_sum += composition_diagnostic(sample, theta, y_s, domain, rho_xz, N).gap;

      for (const auto& [method, value] : est) {
        if (!value || !std::isfinite(*value)) {
          ++cell.unavailable[method];
          continue;
        }
        const double d = *value - t_yD;
        sq[method] += d * d;
        sum[method] += *value;
        ++used[method];
      }
    }
    for (Method method : kMethods) {
      if (used[method] == 0) continue;
      const double k = static_cast<double>(used[method]);
      cell.mse[method] = sq[method] / k;
      cell.mean_estimate[method] = sum[method] / k;
    }
    cell.mean_composition_gap = gap_sum / static_cast<double>(config.mc_samples);
  } catch (const Error& e) {
    cell.error = e.what();
  }
}

}  // namespace

MseTable run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  config.validate();
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  const std::size_t rows = config.rho_xz_targets.size();
  const std::size_t cols = config.rho_yx_targets.size();

  // The population recipe gives z, or x in single-auxiliary mode.
  Rng base_rng = make_stream(config.seed, {1});
  const std::vector<double> base = gen_z(config.population_type, config.N, config.m, base_rng);

  std::vector<RowModel> models(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    RowModel& row = models[k];
    try {
      Rng rng = make_stream(config.seed, {2, k});
      if (config.single_auxiliary) {
        Calibrated z = synth_z_from_x(base, config.rho_xz_targets[k], config.calibration_tolerance, rng);
        row.x = base;
        row.z = std::move(z.values);
        row.achieved_rho_xz = z.achieved_rho;
      } else {
        Calibrated x = calibrate_tau_for_rho(base, config.rho_xz_targets[k],
                                             config.calibration_tolerance, rng);
        row.z = base;
        row.x = std::move(x.values);
        row.achieved_rho_xz = x.achieved_rho;
      }
      const Population pop = Population::from_unsorted(row.z, row.x);
      std::vector<std::size_t> members;
      for (std::size_t u = 0; u < config.N; ++u) {
        if (pop.source_row(u) < config.m) members.push_back(u);
      }
      const Domain domain(std::move(members), config.N);
      const EtaModel eta = fit_eta(pop.z(), pop.x(), config.variance_mode, config.error_law);
      if (config.theta_backend == ThetaBackend::MonteCarlo) {
        McOptions mc;
        mc.threads = threads;
        const OrderProbMatrix probs =
            mc_order_probs(eta, pop.z(), config.orderprob_R, derive_seed(config.seed, {4, k}), mc);
        row.theta = theta_from_probs(probs, domain);
      } else {
        const A0Selection a0 = select_a0(pop.z(), domain, eta);
        row.theta = theta_indicator_approx(pop.z(), domain, eta, a0.a0);
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
  }

  MseTable table;
  table.population_type = config.population_type;
  table.response_case = config.response_case;
  table.reference = config.reference();
  table.cells.resize(rows * cols);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t id = next.fetch_add(1); id < rows * cols; id = next.fetch_add(1)) {
      const std::size_t k = id / cols;
      const std::size_t l = id % cols;
      run_cell(config, models[k], k, l, id, table.cells[id]);
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, rows * cols); ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return table;
}

}  // namespace hrsae

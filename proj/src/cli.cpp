#include "hrsae/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "format.hpp"
#include "hrsae/baselines.hpp"
#include "hrsae/error.hpp"
#include "hrsae/estimators.hpp"
#include "hrsae/orderprob.hpp"
#include "hrsae/simstudy.hpp"
#include "hrsae/validation.hpp"

#ifndef HRSAE_VERSION
#define HRSAE_VERSION "dev"
#endif

namespace hrsae::cli {

namespace {

std::size_t default_threads() {
  if (const char* env = std::getenv("HRSAE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = detail::trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

VarianceMode parse_variance_mode(const std::string& s) {
  if (s == "pooled") return VarianceMode::Pooled;
  if (s == "binned") return VarianceMode::Binned;
  throw UsageError("unknown variance mode '" + s + "'");
}

ErrorLaw parse_error_law(const std::string& s) {
  if (s == "normal") return ErrorLaw::Normal;
  if (s == "empirical") return ErrorLaw::EmpiricalResidual;
  throw UsageError("unknown error law '" + s + "'");
}

struct EstimateArgs {
  std::string pop;
  std::string domain_file;
  std::string domain_ids;
  std::string sample;
  std::string methods = "hr,rhr";
  std::optional<double> rho_xz;
  std::string backend = "montecarlo";
  std::optional<std::uint64_t> seed;
  std::uint64_t R = 100000;
  std::string orderprobs;
  std::string variance_mode = "pooled";
  std::string error_law = "normal";
  std::optional<double> a0;
  std::string format = "csv";
  std::size_t threads = 0;
};

int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
  if (a.domain_file.empty() == a.domain_ids.empty()) {
    throw UsageError("give exactly one of --domain or --domain-ids");
  }
  if (a.format != "csv" && a.format != "json") throw UsageError("--format must be csv or json");
  std::vector<Method> methods;
  for (const auto& name : split_list(a.methods)) methods.push_back(parse_method(name));
  if (methods.empty()) throw UsageError("--methods selects nothing");

  const Population pop = load_population(a.pop);
  const Domain domain =
      a.domain_file.empty() ? parse_domain_list(a.domain_ids, pop) : load_domain(a.domain_file, pop);
  const ObservedSample obs = load_sample(a.sample, pop);
  const std::size_t N = pop.size();
  const std::size_t m = domain.size();
  const DesignSpec design = DesignSpec::srswor(obs.sample.size(), N);
  const DesignCoeffs coeffs(design);
  const auto x_s = gather(pop.x(), obs.sample);
  const double t_xD = domain_sum(pop.x(), domain);
  const double rho = a.rho_xz ? *a.rho_xz : finite_pop_corr(pop.x(), pop.z());

  bool needs_theta = false;
  for (Method meth : methods) {
    needs_theta |= meth == Method::HR || meth == Method::HR1 || meth == Method::RHR;
  }
  std::optional<ThetaVector> theta;
  if (needs_theta) {
    const EtaModel eta = fit_eta(pop.z(), pop.x(), parse_variance_mode(a.variance_mode),
                                 parse_error_law(a.error_law));
    if (!a.orderprobs.empty()) {
      const OrderProbCache cache = load_order_probs(a.orderprobs);
      if (cache.matrix.size() != N) throw DataError("order-probability cache size differs from population");
      theta = theta_from_probs(cache.matrix, domain);
    } else if (a.backend == "montecarlo") {
      if (!a.seed) throw UsageError("--seed is required for the montecarlo backend");
      if (a.R < 1) throw UsageError("--R must be >= 1");
      McOptions mc;
      mc.threads = a.threads ? a.threads : default_threads();
      theta = theta_from_probs(mc_order_probs(eta, pop.z(), a.R, *a.seed, mc), domain);
    } else if (a.backend == "indicator") {
      const double a0 = a.a0 ? *a.a0 : select_a0(pop.z(), domain, eta).a0;
      theta = theta_indicator_approx(pop.z(), domain, eta, a0);
    } else {
      throw UsageError("unknown theta backend '" + a.backend + "'");
    }
  }

  std::vector<EstimateReport> reports;
  for (Method meth : methods) {
    switch (meth) {
      case Method::HT: {
        EstimateReport r;
        r.method = Method::HT;
        const HtResult ht = ht_domain_total(obs.sample, obs.y, domain);
        r.point = ht.value;
        if (ht.empty_intersection) r.flags.set(Flag::EmptyIntersection);
        reports.push_back(r);
        break;
      }
      case Method::HR:
        reports.push_back(hr_mse_est(obs.sample, *theta, obs.y, coeffs, rho, m, N));
        break;
      case Method::HR1:
        reports.push_back(hr1_report(obs.sample, *theta, obs.y, m));
        break;
      case Method::RHR:
        reports.push_back(rhr_mse_est(obs.sample, *theta, obs.y, x_s, t_xD, coeffs, rho, m, N));
        break;
      case Method::SimpleSyn: {
        EstimateReport r;
        r.method = Method::SimpleSyn;
        r.point = simple_synthetic(obs.sample, obs.y, m, N);
        reports.push_back(r);
        break;
      }
      case Method::SYN:
        reports.push_back(syn_estimator(obs.sample, pop.x(), obs.y, domain));
        break;
      case Method::GREG:
        reports.push_back(greg_estimator(obs.sample, pop.x(), obs.y, domain));
        break;
      case Method::EBLUP:
        reports.push_back(eblup_estimator(obs.sample, pop.x(), obs.y, domain));
        break;
    }
  }

  if (a.format == "csv") {
    out << report_csv_header() << '\n';
    for (const auto& r : reports) out << to_csv_row(r) << '\n';
  } else {
    for (const auto& r : reports) out << to_json(r) << '\n';
  }
  return kOk;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, std::size_t threads,
                 std::ostream& out) {
  const ScenarioConfig config = load_scenario_config(config_path);
  const auto start = std::chrono::steady_clock::now();
  RunOptions opts;
  opts.threads = threads ? threads : default_threads();
  const MseTable table = run_scenario(config, opts);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::filesystem::create_directories(out_dir);
  const auto csv_path = std::filesystem::path(out_dir) / "mse_table.csv";
  {
    std::ofstream f(csv_path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + csv_path.string());
    f << table.to_csv();
  }

  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(scenario_config_json(config));
  manifest["seed"] = config.seed;
  manifest["version"] = HRSAE_VERSION;
  manifest["compiler"] = __VERSION__;
  manifest["threads"] = opts.threads;
  manifest["wall_time_seconds"] = wall;
  manifest["reference"] = to_string(table.reference);
  nlohmann::json wins = nlohmann::json::object();
  for (const auto& [method, count] : table.win_counts()) wins[to_string(method)] = count;
  manifest["cells_beating_reference"] = wins;
  nlohmann::json cells = nlohmann::json::array();
  std::size_t failed = 0;
  for (const auto& c : table.cells) {
    nlohmann::json jc;
    jc["rho_xz"] = c.rho_xz;
    jc["rho_yx"] = c.rho_yx;
    jc["achieved_rho_xz"] = c.achieved_rho_xz;
    jc["achieved_rho_yx"] = c.achieved_rho_yx;
    jc["true_total"] = c.true_total;
    jc["hr_bias_true"] = c.hr_bias_true;
    jc["mean_composition_gap"] = c.mean_composition_gap;
    if (c.error) {
      jc["error"] = *c.error;
      ++failed;
    }
    cells.push_back(jc);
  }
  manifest["cells"] = cells;
  const auto manifest_path = std::filesystem::path(out_dir) / "manifest.json";
  {
    std::ofstream f(manifest_path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + manifest_path.string());
    f << manifest.dump(2) << '\n';
  }
  out << "wrote " << csv_path.string() << " (" << table.cells.size() << " cells, " << failed
      << " failed) in " << wall << " s\n";
  return kOk;
}

int cmd_orderprobs(const std::string& pop_path, std::uint64_t R, std::uint64_t seed,
                   const std::string& out_path, const std::string& variance_mode,
                   const std::string& error_law, std::size_t threads, std::ostream& out) {
  if (R < 1) throw UsageError("--R must be >= 1");
  const Population pop = load_population(pop_path);
  const EtaModel eta =
      fit_eta(pop.z(), pop.x(), parse_variance_mode(variance_mode), parse_error_law(error_law));
  McOptions mc;
  mc.threads = threads ? threads : default_threads();
  const OrderProbMatrix probs = mc_order_probs(eta, pop.z(), R, seed, mc);
  save_order_probs(out_path, probs, seed, eta.hash(pop.z()));
  out << "wrote " << out_path << ": N=" << probs.size() << " R=" << probs.replications()
      << " alpha1=" << eta.alpha1 << " alpha2=" << eta.alpha2
      << " max row/col error=" << std::max(probs.max_row_sum_error(), probs.max_col_sum_error())
      << '\n';
  return kOk;
}

int cmd_validate(const std::string& cache, std::ostream& out) {
  std::optional<std::filesystem::path> cache_path;
  if (!cache.empty()) cache_path = cache;
  const auto results = run_validation(cache_path);
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  (" << r.detail << ")\n";
    if (!r.passed) ++failed;
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kOk : kNumeric;
}

}  // namespace

ObservedSample load_sample(const std::filesystem::path& path, const Population& pop) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sample file " + path.string());
  const detail::CsvTable table = detail::read_csv(in);
  const auto idc = table.column("id");
  const auto yc = table.column("y");
  if (!idc || !yc) throw DataError("sample file needs columns 'id' and 'y'");

  std::vector<std::pair<std::size_t, double>> rows;
  for (const auto& row : table.rows) {
    const std::int64_t id = detail::parse_int(row, *idc, "id");
    const auto unit = pop.unit_of_id(id);
    if (!unit) throw ParseError(row.line, "unknown unit id " + std::to_string(id));
    rows.emplace_back(*unit, detail::parse_double(row, *yc, "y"));
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::size_t> idx;
  ObservedSample obs;
  for (const auto& [unit, yv] : rows) {
    idx.push_back(unit);
    obs.y.push_back(yv);
  }
  const DesignSpec design = DesignSpec::srswor(idx.size(), pop.size());
  obs.sample = make_sample(design, std::move(idx));
  return obs;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hidden-randomness small-area estimation toolkit", "hrsae"};
  app.set_version_flag("--version", HRSAE_VERSION);
  app.require_subcommand(1);

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate a domain total from one sample");
  estimate->add_option("--pop", est.pop, "Population CSV (columns z, x, optional y, id)")->required();
  estimate->add_option("--domain", est.domain_file, "Domain file, one unit id per line");
  estimate->add_option("--domain-ids", est.domain_ids, "Inline comma-separated domain unit ids");
  estimate->add_option("--sample", est.sample, "Sample CSV with columns id, y")->required();
  estimate->add_option("--methods", est.methods, "Comma list: ht,hr,hr1,rhr,simple,syn,greg,eblup")
      ->capture_default_str();
  estimate->add_option("--rho-xz", est.rho_xz, "Override the x-z correlation used for bias estimates");
  estimate->add_option("--theta-backend", est.backend, "montecarlo or indicator")->capture_default_str();
  estimate->add_option("--seed", est.seed, "Seed for the Monte-Carlo backend");
  estimate->add_option("--R", est.R, "Monte-Carlo replications")->capture_default_str();
  estimate->add_option("--orderprobs", est.orderprobs, "Precomputed order-probability cache");
  estimate->add_option("--variance-mode", est.variance_mode, "pooled or binned")->capture_default_str();
  estimate->add_option("--error-law", est.error_law, "normal or empirical")->capture_default_str();
  estimate->add_option("--a0", est.a0, "Bandwidth for the indicator backend (default: searched)");
  estimate->add_option("--format", est.format, "csv or json")->capture_default_str();
  estimate->add_option("--threads", est.threads, "Worker threads (default: HRSAE_THREADS or all cores)");

  std::string sim_config, sim_out;
  std::size_t sim_threads = 0;
  auto* simulate = app.add_subcommand("simulate", "Run a simulation scenario");
  simulate->add_option("--config", sim_config, "Scenario JSON file")->required();
  simulate->add_option("--out", sim_out, "Output directory")->required();
  simulate->add_option("--threads", sim_threads, "Worker threads");

  std::string op_pop, op_out, op_vmode = "pooled", op_law = "normal";
  std::uint64_t op_R = 0, op_seed = 0;
  std::size_t op_threads = 0;
  auto* orderprobs = app.add_subcommand("orderprobs", "Precompute the order-probability matrix");
  orderprobs->add_option("--pop", op_pop, "Population CSV")->required();
  orderprobs->add_option("--R", op_R, "Monte-Carlo replications")->required();
  orderprobs->add_option("--seed", op_seed, "Random seed")->required();
  orderprobs->add_option("--out", op_out, "Cache file to write")->required();
  orderprobs->add_option("--variance-mode", op_vmode, "pooled or binned")->capture_default_str();
  orderprobs->add_option("--error-law", op_law, "normal or empirical")->capture_default_str();
  orderprobs->add_option("--threads", op_threads, "Worker threads");

  std::string val_cache;
  auto* validate = app.add_subcommand("validate", "Run the built-in oracle checks");
  validate->add_option("--cache", val_cache, "Also recheck an order-probability cache");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*estimate) return cmd_estimate(est, out);
    if (*simulate) return cmd_simulate(sim_config, sim_out, sim_threads, out);
    if (*orderprobs) {
      return cmd_orderprobs(op_pop, op_R, op_seed, op_out, op_vmode, op_law, op_threads, out);
    }
    if (*validate) return cmd_validate(val_cache, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace hrsae::cli

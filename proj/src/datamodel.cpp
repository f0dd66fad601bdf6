#include "hrsae/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "hrsae/error.hpp"

namespace hrsae {

Population Population::from_unsorted(std::vector<double> z, std::vector<double> x,
                                     std::optional<std::vector<double>> y,
                                     std::optional<std::vector<std::int64_t>> ids) {
  const std::size_t n = z.size();
  if (x.size() != n || (y && y->size() != n) || (ids && ids->size() != n)) {
    throw DataError("population columns have different lengths");
  }
  if (n < 2) throw DataError("population needs at least 2 units, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(z[i]) || !std::isfinite(x[i]) || (y && !std::isfinite((*y)[i]))) {
      throw DataError("non-finite value for unit at row " + std::to_string(i + 1));
    }
  }

  std::vector<std::int64_t> id_col;
  if (ids) {
    id_col = std::move(*ids);
  } else {
    id_col.resize(n);
    std::iota(id_col.begin(), id_col.end(), std::int64_t{1});
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (z[a] != z[b]) return z[a] < z[b];
    return id_col[a] < id_col[b];
  });

  Population pop;
  pop.z_.resize(n);
  pop.x_.resize(n);
  pop.ids_.resize(n);
  pop.rows_ = order;
  if (y) pop.y_.emplace(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = order[k];
    pop.z_[k] = z[r];
    pop.x_[k] = x[r];
    pop.ids_[k] = id_col[r];
    if (y) (*pop.y_)[k] = (*y)[r];
  }

  pop.id_lookup_.reserve(n);
  for (std::size_t k = 0; k < n; ++k) pop.id_lookup_.emplace_back(pop.ids_[k], k);
  std::sort(pop.id_lookup_.begin(), pop.id_lookup_.end());
  for (std::size_t k = 1; k < n; ++k) {
    if (pop.id_lookup_[k].first == pop.id_lookup_[k - 1].first) {
      throw DataError("duplicate unit id " + std::to_string(pop.id_lookup_[k].first));
    }
  }
  return pop;
}

std::span<const double> Population::y() const {
  if (!y_) throw UnavailableOracleError("study variable y is not known for the whole population");
  return *y_;
}

std::optional<std::size_t> Population::unit_of_id(std::int64_t id) const {
  auto it = std::lower_bound(id_lookup_.begin(), id_lookup_.end(),
                             std::pair<std::int64_t, std::size_t>{id, 0});
  if (it == id_lookup_.end() || it->first != id) return std::nullopt;
  return it->second;
}

std::vector<double> Population::to_input_order(std::span<const double> sorted) const {
  if (sorted.size() != size()) throw DataError("vector length does not match population");
  std::vector<double> out(size());
  for (std::size_t k = 0; k < size(); ++k) out[rows_[k]] = sorted[k];
  return out;
}

Domain::Domain(std::vector<std::size_t> members, std::size_t population_size)
    : members_(std::move(members)), mask_(population_size, 0) {
  if (members_.empty()) throw DataError("domain must contain at least one unit");
  std::sort(members_.begin(), members_.end());
  for (std::size_t k = 0; k < members_.size(); ++k) {
    if (members_[k] >= population_size) {
      throw DataError("domain member " + std::to_string(members_[k]) + " outside population");
    }
    if (k > 0 && members_[k] == members_[k - 1]) {
      throw DataError("duplicate domain member " + std::to_string(members_[k]));
    }
    mask_[members_[k]] = 1;
  }
}

Domain Domain::whole(std::size_t population_size) {
  std::vector<std::size_t> all(population_size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return Domain(std::move(all), population_size);
}

Population load_population(const std::filesystem::path& csv_path, const ColumnMap& columns) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open population file " + csv_path.string());
  const detail::CsvTable table = detail::read_csv(in);

  const auto zc = table.column(columns.z);
  const auto xc = table.column(columns.x);
  if (!zc) throw DataError("population file lacks required column '" + columns.z + "'");
  if (!xc) throw DataError("population file lacks required column '" + columns.x + "'");
  const auto yc = table.column(columns.y);
  const auto idc = table.column(columns.id);

  std::vector<double> z, x, y;
  std::vector<std::int64_t> ids;
  for (const auto& row : table.rows) {
    z.push_back(detail::parse_double(row, *zc, columns.z));
    x.push_back(detail::parse_double(row, *xc, columns.x));
    if (yc) y.push_back(detail::parse_double(row, *yc, columns.y));
    if (idc) ids.push_back(detail::parse_int(row, *idc, columns.id));
  }
  if (z.size() < 2) {
    throw DataError("population needs at least 2 units, got " + std::to_string(z.size()));
  }
  std::optional<std::vector<double>> y_opt;
  if (yc) y_opt = std::move(y);
  std::optional<std::vector<std::int64_t>> id_opt;
  if (idc) id_opt = std::move(ids);
  return Population::from_unsorted(std::move(z), std::move(x), std::move(y_opt), std::move(id_opt));
}

Domain domain_from_ids(std::span<const std::int64_t> ids, const Population& pop) {
  std::vector<std::size_t> members;
  members.reserve(ids.size());
  for (auto id : ids) {
    auto unit = pop.unit_of_id(id);
    if (!unit) throw DataError("domain references unknown unit id " + std::to_string(id));
    members.push_back(*unit);
  }
  return Domain(std::move(members), pop.size());
}

Domain load_domain(const std::filesystem::path& path, const Population& pop) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open domain file " + path.string());
  std::vector<std::int64_t> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size()) {
      throw ParseError(lineno, "expected an integer unit id, got '" + t + "'");
    }
    ids.push_back(v);
  }
  return domain_from_ids(ids, pop);
}

Domain parse_domain_list(const std::string& list, const Population& pop) {
  std::vector<std::int64_t> ids;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const std::string t = detail::trim(tok);
    if (t.empty()) continue;
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size()) {
      throw UsageError("invalid unit id '" + t + "' in domain list");
    }
    ids.push_back(v);
  }
  return domain_from_ids(ids, pop);
}

double domain_sum(std::span<const double> values, const Domain& domain) {
  double s = 0.0;
  for (auto i : domain.members()) s += values[i];
  return s;
}

double domain_total(const Population& pop, const Domain& domain) {
  return domain_sum(pop.y(), domain);
}

double population_variance(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double e : v) ss += (e - mean) * (e - mean);
  return ss / n;
}

double finite_pop_corr(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DataError("correlation inputs differ in length");
  if (u.size() < 2) throw DataError("correlation needs at least 2 values");
  const double n = static_cast<double>(u.size());
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double suu = 0.0, svv = 0.0, suv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double du = u[i] - mu;
    const double dv = v[i] - mv;
    suu += du * du;
    svv += dv * dv;
    suv += du * dv;
  }
  if (suu <= 0.0 || svv <= 0.0) throw DegenerateError("correlation undefined: zero variance");
  return std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0);
}

}  // namespace hrsae

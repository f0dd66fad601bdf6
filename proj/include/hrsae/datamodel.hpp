#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hrsae {

/// Finite population with units renumbered so that z is nondecreasing.
///
/// Unit k (0-based) of the sorted population came from input row
/// `source_row(k)` and carries the external identifier `id(k)`. Ties in z
/// are broken by the external identifier so the order is deterministic.
class Population {
 public:
  /// Sorts the given columns by (z, id). `ids` defaults to 1..N.
  static Population from_unsorted(std::vector<double> z, std::vector<double> x,
                                  std::optional<std::vector<double>> y = std::nullopt,
                                  std::optional<std::vector<std::int64_t>> ids = std::nullopt);

  std::size_t size() const noexcept { return z_.size(); }
  std::span<const double> z() const noexcept { return z_; }
  std::span<const double> x() const noexcept { return x_; }
  bool has_y() const noexcept { return y_.has_value(); }
  /// Throws UnavailableOracleError when y is absent.
  std::span<const double> y() const;

  std::int64_t id(std::size_t unit) const { return ids_.at(unit); }
  std::span<const std::int64_t> ids() const noexcept { return ids_; }
  /// 0-based position of the unit in the input order.
  std::size_t source_row(std::size_t unit) const { return rows_.at(unit); }
  std::span<const std::size_t> source_rows() const noexcept { return rows_; }

  /// Sorted unit index carrying external id `id`; nullopt when unknown.
  std::optional<std::size_t> unit_of_id(std::int64_t id) const;

  /// Reapplies the stored permutation: returns `sorted` in input order.
  std::vector<double> to_input_order(std::span<const double> sorted) const;

 private:
  Population() = default;

  std::vector<double> z_;
  std::vector<double> x_;
  std::optional<std::vector<double>> y_;
  std::vector<std::int64_t> ids_;
  std::vector<std::size_t> rows_;
  std::vector<std::pair<std::int64_t, std::size_t>> id_lookup_;
};

/// Subset of unit indices (0-based, sorted population order).
class Domain {
 public:
  Domain(std::vector<std::size_t> members, std::size_t population_size);

  static Domain whole(std::size_t population_size);

  std::size_t size() const noexcept { return members_.size(); }
  std::size_t population_size() const noexcept { return mask_.size(); }
  std::span<const std::size_t> members() const noexcept { return members_; }
  bool contains(std::size_t unit) const noexcept {
    return unit < mask_.size() && mask_[unit] != 0;
  }

 private:
  std::vector<std::size_t> members_;
  std::vector<char> mask_;
};

/// Fitted form of the study-variable model y = beta1 + beta2 x + e.
struct ModelXi {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double sigma2 = 0.0;
};

struct ColumnMap {
  std::string z = "z";
  std::string x = "x";
  std::string y = "y";
  std::string id = "id";
};

Population load_population(const std::filesystem::path& csv_path, const ColumnMap& columns = {});

/// Reads one external id per line (blank lines and '#' comments skipped) and
/// resolves them against the population.
Domain load_domain(const std::filesystem::path& path, const Population& pop);

/// Resolves a comma-separated inline list of external ids.
Domain parse_domain_list(const std::string& list, const Population& pop);

Domain domain_from_ids(std::span<const std::int64_t> ids, const Population& pop);

double domain_total(const Population& pop, const Domain& domain);

/// Sum of `values` over the domain members.
double domain_sum(std::span<const double> values, const Domain& domain);

/// Pearson correlation over all entries. Throws DegenerateError on zero variance.
double finite_pop_corr(std::span<const double> u, std::span<const double> v);

/// Population variance with divisor N.
double population_variance(std::span<const double> v);

}  // namespace hrsae

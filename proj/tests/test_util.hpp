#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hrsae/datamodel.hpp"

namespace test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hrsae_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double pearson(const std::vector<double>& u, const std::vector<double>& v) {
  const double mu = mean(u), mv = mean(v);
  double suv = 0, suu = 0, svv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    suv += (u[i] - mu) * (v[i] - mv);
    suu += (u[i] - mu) * (u[i] - mu);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  return suv / std::sqrt(suu * svv);
}

inline hrsae::Population six_unit_fixture() {
  return hrsae::Population::from_unsorted({1.2, 0.7, 2.9, 3.1, 4.4, 5.0},
                                          {2.0, 1.1, 3.5, 2.8, 5.1, 6.3},
                                          std::vector<double>{3.0, 1.5, 4.2, 3.9, 7.0, 8.1});
}

inline hrsae::Population random_population(std::size_t N, std::mt19937_64& gen) {
  std::normal_distribution<double> zdist(4.0, 1.0), noise(0.0, 0.7);
  std::vector<double> z(N), x(N), y(N);
  for (std::size_t i = 0; i < N; ++i) {
    z[i] = zdist(gen);
    x[i] = 1.0 + z[i] + noise(gen);
    y[i] = 2.0 + 1.5 * x[i] + noise(gen);
  }
  return hrsae::Population::from_unsorted(std::move(z), std::move(x), std::move(y));
}

/// Visits every n-subset of {0..N-1} in lexicographic order.
inline void each_subset(std::size_t N, std::size_t n,
                        const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (;;) {
    fn(idx);
    std::size_t k = n;
    while (k > 0 && idx[k - 1] == N - n + k - 1) --k;
    if (k == 0) return;
    ++idx[k - 1];
    for (std::size_t j = k; j < n; ++j) idx[j] = idx[j - 1] + 1;
  }
}

/// Random subset of size m drawn with the given engine.
inline std::vector<std::size_t> random_subset(std::size_t N, std::size_t m, std::mt19937_64& gen) {
  std::vector<std::size_t> all(N);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::shuffle(all.begin(), all.end(), gen);
  all.resize(m);
  return all;
}

}  // namespace test

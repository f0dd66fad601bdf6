#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hrsae {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Enumeration-oracle and special-case self checks. When `cache` is given the
/// order-probability cache is loaded and rechecked as well.
std::vector<CheckResult> run_validation(const std::optional<std::filesystem::path>& cache = {});

}  // namespace hrsae

#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "hrsae/datamodel.hpp"
#include "hrsae/sampling.hpp"

namespace hrsae::cli {

/// Exit codes: 0 success, 1 usage, 2 data, 3 numeric or degenerate.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Sampled units with their observed study values, aligned with `sample`.
struct ObservedSample {
  Sample sample;
  std::vector<double> y;
};

/// Reads a CSV with columns `id` and `y`; the design is SRSWOR with n = rows.
ObservedSample load_sample(const std::filesystem::path& path, const Population& pop);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hrsae::cli

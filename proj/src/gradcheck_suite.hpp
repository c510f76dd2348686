#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace wvad {

struct SuiteEntry {
  std::string name;
  std::uint64_t seed = 0;
  double max_error = 0.0;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::vector<SuiteEntry> entries;
  bool passed = true;
};

struct SuiteOptions {
  std::size_t seeds = 10;
  GradCheckOptions check;
  // Adds an op with a deliberately wrong backward rule (negative control).
  bool inject_faulty_op = false;
  std::function<void(const SuiteEntry&)> on_entry;
};

// Names of every check the suite runs, in order.
std::vector<std::string> gradcheck_suite_names(bool inject_faulty_op = false);

// Finite-difference checks of every differentiable op, each loss term and the
// full objective on a micro model (T=8, D_in=4, D_model=8, 2 heads, depth 2).
SuiteReport run_gradcheck_suite(const SuiteOptions& options);

std::string format_suite_entry(const SuiteEntry& e);

}  // namespace wvad

#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace vfd::cli {

struct GradientSuiteOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double threshold = 1e-4;
  // Negates the analytic gradient of the named check; the harness must then
  // report that check as failing.
  std::string inject_fault;
};

struct GradientCheckRow {
  std::string name;
  double max_relative_error = 0.0;
  double threshold = 0.0;
  std::size_t instances = 0;
  bool passed = false;
};

// Names of every check, in run order.
std::vector<std::string> gradient_check_names();

// Each check compares tape gradients with central differences on
// `instances` seeded random inputs; the error is ||a - n|| / max(||a||, ||n||)
// over all inputs of the instance.
std::vector<GradientCheckRow> run_gradient_suite(const GradientSuiteOptions& options);

void print_gradient_table(std::ostream& out, const std::vector<GradientCheckRow>& rows);

}  // namespace vfd::cli

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "toposeg/tensor.hpp"

namespace toposeg::cli {

struct GradcheckOptions {
  /// Op names to check; empty means all.
  std::vector<std::string> ops;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double step = 1e-5;
};

/// Inputs, gradients and error of the worst trial of one op.
struct WorstCase {
  std::size_t trial = 0;
  double error = 0.0;
  std::vector<Tensor> inputs;
  std::vector<Tensor> autodiff;
  std::vector<Tensor> finite_difference;
};

struct OpCheck {
  std::string op;
  std::size_t trials = 0;
  double max_error = 0.0;
  bool passed = false;
  WorstCase worst;
};

/// Every checkable op, in check order.
std::vector<std::string_view> gradcheck_op_names();

/// Compares reverse-mode gradients against central differences on random
/// inputs kept away from kinks. Trial inputs depend only on (seed, op, trial),
/// so filtering ops does not change any reported error.
std::vector<OpCheck> run_gradcheck(const GradcheckOptions& options);

/// JSON array describing the worst case of each given check, for reproducing
/// failures.
std::string worst_cases_json(const std::vector<OpCheck>& checks, std::uint64_t seed);

}  // namespace toposeg::cli

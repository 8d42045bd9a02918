#pragma once

#include "useg/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace useg {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int instances = 20;
  /// Central-difference step.
  double step = 1e-4;
  /// Deliberately corrupt one analytic gradient (self-test of the suite).
  bool inject_fault = false;
};

struct OpCheck {
  std::string op;
  int instances = 0;
  std::int64_t entries = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<OpCheck> ops;
  double seconds = 0.0;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
  std::string to_text() const;
};

/// |a - n| / max(|a|, |n|, 1e-3 * tensor_scale, 1e-10), where tensor_scale is the largest
/// gradient magnitude in the same tensor. Entries far below that scale are judged relative to it:
/// their central differences are dominated by rounding of the function value, not by the gradient.
double relative_error(double analytic, double numeric, double tensor_scale);

/// Finite-difference check of every layer op and every loss kind (gamma 0.5, 1, 2) on small
/// random instances in 64-bit.
GradcheckReport run_gradient_suite(const GradcheckOptions& options = {});

}  // namespace useg

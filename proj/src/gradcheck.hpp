#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "autograd.hpp"

namespace wvad {

// Builds a scalar on `tape` from leaves holding the current parameter values.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct ParamCheck {
  std::string name;
  double max_error = 0.0;  // |analytic - numeric| / max(1, |analytic|, |numeric|)
  std::size_t worst_index = 0;
  double analytic = 0.0;   // values at worst_index
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_error = 0.0;
  bool passed = false;
  std::string failure;  // non-empty when a perturbed evaluation was not finite
};

// Compares tape gradients against central differences, one element at a
// time. `names` may be empty, in which case parameters are numbered.
GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> params, std::vector<std::string> names = {},
                           const GradCheckOptions& options = {});

}  // namespace wvad

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "part/autodiff.hpp"
#include "part/params.hpp"

namespace part {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled per parameter (all of them when the parameter is smaller).
  std::size_t samples_per_param = 200;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Multiplies every weight-decayed (projection) parameter by factor. At the default
/// 0.02 init the attention logits are nearly flat, so many coordinates carry gradients
/// below the resolution of central differences; checks run at a rescaled point.
void scale_weights(ParameterStore& store, double factor);

/// Compares reverse-mode gradients against central differences
/// (f(p+h) - f(p-h)) / 2h. The relative error of one coordinate is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
///
/// loss_fn builds a scalar loss on a fresh tape and must bind every checked parameter
/// with Tape::param. Parameter gradients are overwritten.
GradCheckResult grad_check(const std::function<ad::Var(ad::Tape&)>& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace part

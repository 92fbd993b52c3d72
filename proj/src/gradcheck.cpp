#include "part/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "part/error.hpp"
#include "part/rng.hpp"

namespace part {

namespace {

double evaluate(const std::function<ad::Var(ad::Tape&)>& loss_fn) {
  ad::Tape tape;
  const double v = loss_fn(tape).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss at perturbed point");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<ad::Var(ad::Tape&)>& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  if (!(options.step >= 1e-6 && options.step <= 1e-4)) {
    throw ConfigError("grad_check: step must lie in [1e-6, 1e-4]");
  }
  GradCheckResult result;
  if (params.empty()) return result;

  for (Parameter* p : params) p->zero_grad();
  {
    ad::Tape tape;
    ad::Var loss = loss_fn(tape);
    if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
  }

  Rng rng(options.seed);
  const double h = options.step;
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    const std::size_t take = std::min(n, options.samples_per_param);
    for (std::size_t i = 0; i < take; ++i) std::swap(coords[i], coords[i + rng.below(n - i)]);
    coords.resize(take);

    for (std::size_t idx : coords) {
      const double original = p->value[idx];
      p->value[idx] = original + h;
      const double up = evaluate(loss_fn);
      p->value[idx] = original - h;
      const double down = evaluate(loss_fn);
      p->value[idx] = original;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[idx];
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++result.coordinates_checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        if (rel >= result.max_rel_error) {
          result.worst_param = p->name;
          result.worst_index = idx;
          result.worst_analytic = analytic;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace part

namespace part {

void scale_weights(ParameterStore& store, double factor) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].decay) continue;
    for (double& v : store[i].value.data()) v *= factor;
  }
}

}  // namespace part

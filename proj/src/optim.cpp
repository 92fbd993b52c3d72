#include "part/optim.hpp"

#include <cmath>
#include <numbers>

#include "part/error.hpp"

namespace part {

std::string to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

Schedule schedule_from_string(const std::string& s) {
  if (s == "cosine") return Schedule::cosine;
  if (s == "constant") return Schedule::constant;
  throw ConfigError("train.schedule must be cosine|constant, got '" + s + "'");
}

double learning_rate_at(std::uint64_t step, double base_lr, std::uint64_t total_steps, std::uint64_t warmup_steps,
                        Schedule schedule) {
  if (step < warmup_steps) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (schedule == Schedule::constant || total_steps <= warmup_steps) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

AdamW::AdamW(ParameterStore& store, AdamWConfig config)
    : store_(store), config_(config), m_(make_gradient_buffer(store)), v_(make_gradient_buffer(store)),
      trainable_(store.size(), true) {}

void AdamW::set_trainable(std::span<Parameter* const> params) {
  trainable_.assign(store_.size(), false);
  for (const Parameter* p : params) trainable_[p->index] = true;
}

void AdamW::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < store_.size(); ++i) {
    if (!trainable_[i]) continue;
    Parameter& p = store_[i];
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const double decay = p.decay ? 1.0 - lr * config_.weight_decay : 1.0;
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
      v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
      value[k] = value[k] * decay - lr * update;
    }
  }
}

}  // namespace part

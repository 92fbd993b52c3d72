#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "part/params.hpp"

namespace part {

enum class Schedule { cosine, constant };
std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

/// Linear warmup over warmup_steps, then cosine decay to zero (or constant).
double learning_rate_at(std::uint64_t step, double base_lr, std::uint64_t total_steps, std::uint64_t warmup_steps,
                        Schedule schedule);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double weight_decay = 0.05;
};

/// Adaptive moments with decoupled weight decay: p <- p (1 - lr wd) for decayed
/// parameters, then p <- p - lr m_hat / (sqrt(v_hat) + eps).
class AdamW {
 public:
  AdamW(ParameterStore& store, AdamWConfig config);
  /// Restricts updates to the listed parameters (others are left untouched).
  void set_trainable(std::span<Parameter* const> params);

  void step(double lr);

  std::uint64_t steps_taken() const { return t_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  bool trainable(std::size_t index) const { return trainable_[index]; }

 private:
  ParameterStore& store_;
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::vector<bool> trainable_;
  std::uint64_t t_ = 0;
};

}  // namespace part

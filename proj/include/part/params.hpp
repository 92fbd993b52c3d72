#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "part/rng.hpp"
#include "part/tensor.hpp"

namespace part {

enum class Init { zeros, ones, trunc_normal };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  /// Subject to decoupled weight decay (projection weights only).
  bool decay = false;
  /// Position in the owning store; indexes gradient buffers.
  std::size_t index = 0;

  void zero_grad() { grad.fill(0.0); }
};

/// Ordered, name-addressed collection of parameters. Addresses are stable for the
/// lifetime of the store.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng,
                 double std = 0.02);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<Parameter*> all();
  /// Parameters whose name starts with the prefix.
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Per-parameter gradient slots with the same shapes as a store.
std::vector<Tensor> make_gradient_buffer(const ParameterStore& store);

}  // namespace part

#include "part/params.hpp"

#include "part/error.hpp"

namespace part {

Parameter& ParameterStore::add(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng,
                               double std) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(rows, cols);
  p->grad = Tensor(rows, cols);
  p->index = params_.size();
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      p->value.fill(1.0);
      break;
    case Init::trunc_normal:
      for (auto& v : p->value.data()) v = rng.truncated_normal(std);
      p->decay = true;
      break;
  }
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterStore::at(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ConfigError("unknown parameter '" + name + "'");
  return *p;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->name.starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::vector<Tensor> make_gradient_buffer(const ParameterStore& store) {
  std::vector<Tensor> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.emplace_back(store[i].value.rows(), store[i].value.cols());
  return out;
}

}  // namespace part

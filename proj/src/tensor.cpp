#include "part/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "part/error.hpp"

namespace part {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape [" +
                     std::to_string(rows) + ", " + std::to_string(cols) + "]");
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add(const Tensor& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw ShapeError("add: shapes " + shape_string(*this) + " and " + shape_string(other));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item: tensor is not a scalar " + shape_string(*this));
  return data_[0];
}

std::string shape_string(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + ", " + std::to_string(t.cols()) + "]";
}

}  // namespace part

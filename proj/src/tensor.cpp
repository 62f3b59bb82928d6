#include "mphil/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace mphil {

Tensor::Tensor(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str());
  }
  check_finite(*this, "Tensor()");
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw std::invalid_argument("Tensor: ragged initializer rows");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
  check_finite(*this, "Tensor()");
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
  Tensor t(rows, cols);
  for (auto& v : t.data_) v = value;
  check_finite(t, "Tensor::full");
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, {value}); }

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data_.size(), 0.0);
}

void check_finite(const Tensor& t, const char* op) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t.data()[i])) {
      throw std::invalid_argument(std::string(op) + ": non-finite value at flat index " +
                                  std::to_string(i) + " of " + t.shape_str());
    }
  }
}

}  // namespace mphil

#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace mphil {

/// Dense row-major matrix of 64-bit floats.
///
/// Every stored value must be finite: constructors taking data reject
/// NaN/Inf, and each tape operation re-validates its output, so a numerical
/// fault surfaces at the op that produced it instead of ten ops later.
/// The grad buffer stays empty unless a backward pass touches the tensor.
class Tensor {
public:
  Tensor() = default;

  /// Zero-filled tensor. Zero-sized shapes are allowed (empty row gathers).
  Tensor(std::size_t rows, std::size_t cols);

  /// Takes ownership of `values`; throws std::invalid_argument if the length
  /// does not equal rows*cols or any entry is non-finite.
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  /// Literal construction: Tensor{{1,2},{3,4}}. Rows must have equal length.
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor full(std::size_t rows, std::size_t cols, double value);
  static Tensor row(std::initializer_list<double> values);
  static Tensor scalar(double value);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// "[3x4]" — used in shape-mismatch error messages.
  std::string shape_str() const;

  /// Whether backward should accumulate into this tensor.
  bool requires_grad = false;

  /// Same-shape gradient accumulator; empty means "no gradient yet".
  std::vector<double> grad;

  /// Allocate (zeroed) grad storage if absent.
  void ensure_grad();

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws std::invalid_argument naming `op` if any entry is NaN/Inf.
void check_finite(const Tensor& t, const char* op);

}  // namespace mphil

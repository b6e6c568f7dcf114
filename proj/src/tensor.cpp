#include "meshflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "meshflow/error.hpp"

namespace meshflow {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor of shape " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " given " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(1, n, std::move(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on a non-scalar tensor");
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::transposed() const {
  Tensor t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t.data_[c * rows_ + r] = data_[r * cols_ + c];
  }
  return t;
}

Tensor Tensor::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != data_.size()) throw ShapeError("reshape changes element count");
  return Tensor(rows, cols, data_);
}

void Tensor::check_finite(std::string_view op) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(op));
    }
  }
}

void require_shape(const Tensor& t, std::size_t rows, std::size_t cols,
                   std::string_view what) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(t.rows()) +
                     "x" + std::to_string(t.cols()));
  }
}

}  // namespace meshflow

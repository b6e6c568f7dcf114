#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace meshflow {

/// Dense row-major 2-D array of doubles. Every quantity in the networks is a
/// matrix: per-point features are N x C, codes and biases are 1 x C, losses
/// are 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row_vector(std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  double item() const;
  void fill(double v);
  Tensor transposed() const;
  Tensor reshaped(std::size_t rows, std::size_t cols) const;

  /// Throws NumericError naming `op` if any entry is NaN or infinite.
  void check_finite(std::string_view op) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

void require_shape(const Tensor& t, std::size_t rows, std::size_t cols,
                   std::string_view what);

namespace kernels {

template <typename T>
inline T madd(T a, T b, T c) {
#if defined(__FMA__)
  return std::fma(a, b, c);
#else
  return a * b + c;
#endif
}

/// out[n, :] = bias + sum_k x[n, k] * w[k, :], accumulated in k order for
/// every output element regardless of which row block it falls in. Rows are
/// therefore computed independently: a row's result does not depend on N or
/// on its position. `bias` may be null.
template <typename T>
void linear_rows(const T* x, const T* w, const T* bias, T* out, std::size_t n,
                 std::size_t in_dim, std::size_t out_dim) {
  constexpr std::size_t kRows = 8;
  constexpr std::size_t kCols = 256 / sizeof(T);
  auto scalar_row = [&](std::size_t r, std::size_t j0) {
    for (std::size_t j = j0; j < out_dim; ++j) {
      T acc = bias ? bias[j] : T(0);
      for (std::size_t k = 0; k < in_dim; ++k) {
        acc = madd(x[r * in_dim + k], w[k * out_dim + j], acc);
      }
      out[r * out_dim + j] = acc;
    }
  };
  std::size_t r = 0;
  for (; r + kRows <= n; r += kRows) {
    std::size_t j = 0;
    for (; j + kCols <= out_dim; j += kCols) {
      T acc[kRows][kCols];
      for (std::size_t rr = 0; rr < kRows; ++rr) {
        for (std::size_t jj = 0; jj < kCols; ++jj) acc[rr][jj] = bias ? bias[j + jj] : T(0);
      }
      for (std::size_t k = 0; k < in_dim; ++k) {
        const T* wk = w + k * out_dim + j;
        for (std::size_t rr = 0; rr < kRows; ++rr) {
          const T xv = x[(r + rr) * in_dim + k];
          for (std::size_t jj = 0; jj < kCols; ++jj) acc[rr][jj] = madd(xv, wk[jj], acc[rr][jj]);
        }
      }
      for (std::size_t rr = 0; rr < kRows; ++rr) {
        for (std::size_t jj = 0; jj < kCols; ++jj) out[(r + rr) * out_dim + j + jj] = acc[rr][jj];
      }
    }
    for (std::size_t rr = r; rr < r + kRows; ++rr) scalar_row(rr, j);
  }
  for (; r < n; ++r) scalar_row(r, 0);
}

}  // namespace kernels
}  // namespace meshflow

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dskg/common.hpp"

namespace dskg {

// Dense row-major matrix. Rows are exposed as spans so callers never touch
// raw offsets.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// out += m * x
template <typename T>
void matvec_add(const Matrix<T>& m, std::span<const T> x, std::span<T> out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out[i] += dot<T>(m.row(i), x);
  }
}

// out += m^T * y
template <typename T>
void matvec_transposed_add(const Matrix<T>& m, std::span<const T> y,
                           std::span<T> out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const T yi = y[i];
    if (yi == T{}) continue;
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += yi * r[j];
  }
}

// m += y x^T
template <typename T>
void outer_add(Matrix<T>& m, std::span<const T> y, std::span<const T> x) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const T yi = y[i];
    if (yi == T{}) continue;
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += yi * x[j];
  }
}

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace dskg

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace lens {

// Dense row-major matrix of doubles. The single numeric carrier for weights,
// gradients and sample blocks throughout the toolkit.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_.data() + i * cols_, cols_);
  }
  std::span<double> row(std::size_t i) {
    return std::span<double>(data_.data() + i * cols_, cols_);
  }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Product with OpenMP parallelism over output rows. Each output element is
// accumulated in ascending-k order, so the result is bitwise identical to
// matmul_serial for any thread count.
Matrix matmul(const Matrix& a, const Matrix& b);

// Naive triple loop, kept as the reference implementation for tests and the
// kernel benchmark.
Matrix matmul_serial(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// dst += s * src (shapes must agree)
void axpy(Matrix& dst, const Matrix& src, double s);

// Vector helpers over std::vector<double> / spans.
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

void ensure_finite(const Matrix& m, const char* what);
void ensure_finite(std::span<const double> v, const char* what);

}  // namespace lens

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sfg {

/// Dense row-major array of doubles with an explicit shape.
///
/// Rank-2 tensors are the workhorse (matrices of patches, tokens, weights);
/// rank-1 tensors hold vectors and biases. Rank 0 is a scalar with one
/// element.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor vector(std::size_t n, double fill = 0.0);
  static Tensor identity(std::size_t n);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix views; throw DimensionError when rank != 2.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Throw DimensionError unless a and b share a shape. `what` names the caller.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
void require_matrix(const Tensor& a, const char* what);

/// a (m×k) · b (k×n). Accumulates over k in ascending order for every output.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a (m×k) · bᵀ where b is n×k.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b where a is k×m and b is k×n.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise softmax with max subtraction. Throws DomainError on non-finite input.
Tensor softmax_rows(const Tensor& m);

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues within the tolerance below zero are clamped; anything more
/// negative, or a matrix that is not symmetric, raises DomainError.
Tensor sqrtm_spd(const Tensor& sigma);

struct MeanCov {
  Tensor mean;  // d
  Tensor cov;   // d×d, divisor N−1
};
MeanCov mean_cov(const Tensor& x);

// Elementwise helpers used throughout the model code.
void axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha·x
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(const Tensor& a);
double frobenius_norm(const Tensor& a);
double trace(const Tensor& a);

}  // namespace sfg

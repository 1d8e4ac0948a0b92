#include "sfg/tensor.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "sfg/errors.hpp"

namespace sfg {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// Relative tolerances for sqrtm_spd input validation.
constexpr double kSymmetryTol = 1e-9;
constexpr double kNegativeEigenTol = 1e-10;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajor> as_matrix(Tensor& t) {
  return {t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<const RowMajor> as_matrix(const Tensor& t) {
  return {t.values().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::vector(std::size_t n, double fill) { return Tensor({n}, fill); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  require_matrix(*this, "rows()");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_matrix(*this, "cols()");
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* what) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got shape " +
                         shape_string(a.shape()));
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (b.rows() != a.cols()) {
    throw DimensionError("matmul: inner dimensions " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (b.cols() != a.cols()) {
    throw DimensionError("matmul_nt: inner dimensions " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
  }
  Tensor out = Tensor::matrix(a.rows(), b.rows());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (b.rows() != a.rows()) {
    throw DimensionError("matmul_tn: inner dimensions " + shape_string(a.shape()) + "^T x " +
                         shape_string(b.shape()));
  }
  Tensor out = Tensor::matrix(a.cols(), b.cols());
  as_matrix(out).noalias() = as_matrix(a).transpose() * as_matrix(b);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& m) {
  require_matrix(m, "softmax_rows");
  if (!m.all_finite()) throw DomainError("softmax_rows: non-finite input");
  Tensor out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    if (row.empty()) continue;
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

Tensor sqrtm_spd(const Tensor& sigma) {
  require_matrix(sigma, "sqrtm_spd");
  const std::size_t d = sigma.rows();
  if (sigma.cols() != d) throw DimensionError("sqrtm_spd: matrix is not square");
  if (!sigma.all_finite()) throw DomainError("sqrtm_spd: non-finite input");
  if (d == 0) return sigma;

  double max_abs = 0.0;
  for (double v : sigma.values()) max_abs = std::max(max_abs, std::abs(v));
  const double sym_tol = kSymmetryTol * std::max(1.0, max_abs);
  Eigen::MatrixXd m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (std::abs(sigma(i, j) - sigma(j, i)) > sym_tol) {
        throw DomainError("sqrtm_spd: matrix is not symmetric");
      }
      m(i, j) = 0.5 * (sigma(i, j) + sigma(j, i));
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw DomainError("sqrtm_spd: eigendecomposition failed");
  Eigen::VectorXd evals = solver.eigenvalues();
  const double neg_tol = kNegativeEigenTol * std::max(1.0, evals.maxCoeff());
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (evals(i) < -neg_tol) {
      throw DomainError("sqrtm_spd: matrix is indefinite (eigenvalue " +
                        std::to_string(evals(i)) + ")");
    }
    evals(i) = std::sqrt(std::max(0.0, evals(i)));
  }
  const Eigen::MatrixXd& v = solver.eigenvectors();
  const Eigen::MatrixXd root = v * evals.asDiagonal() * v.transpose();

  Tensor out = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = 0.5 * (root(i, j) + root(j, i));
  return out;
}

MeanCov mean_cov(const Tensor& x) {
  require_matrix(x, "mean_cov");
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) throw InsufficientDataError("mean_cov: need at least 2 rows, got " + std::to_string(n));

  MeanCov out{Tensor::vector(d), Tensor::matrix(d, d)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += x(r, j);
  for (std::size_t j = 0; j < d; ++j) out.mean[j] /= static_cast<double>(n);

  std::vector<double> centered(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = x(r, j) - out.mean[j];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) out.cov(i, j) += centered[i] * centered[j];
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      out.cov(i, j) /= denom;
      out.cov(j, i) = out.cov(i, j);
    }
  }
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (x.size() != y.size()) throw DimensionError("axpy: size mismatch");
  const auto xs = x.values();
  auto ys = y.values();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += alpha * xs[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Tensor& a) { return dot(a.values(), a.values()); }

double frobenius_norm(const Tensor& a) { return std::sqrt(squared_norm(a)); }

double trace(const Tensor& a) {
  require_matrix(a, "trace");
  if (a.rows() != a.cols()) throw DimensionError("trace: matrix is not square");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

}  // namespace sfg

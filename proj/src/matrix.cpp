#include "kdla/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "kdla/errors.hpp"
#include "kdla/kernels.hpp"

namespace kdla {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_shape(data_.size() == rows_ * cols_, "Matrix: data length " + std::to_string(data_.size()) +
                                                   " != rows*cols " + std::to_string(rows_ * cols_));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require_shape(r.size() == cols_, "Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

std::vector<double> Matrix::col(std::size_t j) const {
  std::vector<double> v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

void Matrix::set_col(std::size_t j, std::span<const double> v) {
  require_shape(v.size() == rows_ && j < cols_, "Matrix::set_col: bad column");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix Matrix::row_block(std::size_t first, std::size_t count) const {
  require_shape(first + count <= rows_, "row_block: out of range");
  return Matrix(count, cols_,
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                                    data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_)));
}

Matrix Matrix::col_block(std::size_t first, std::size_t count) const {
  require_shape(first + count <= cols_, "col_block: out of range");
  Matrix out(rows_, count);
  for (std::size_t i = 0; i < rows_; ++i) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_ + first), count, out.row(i).begin());
  }
  return out;
}

Matrix Matrix::gather_cols(std::span<const std::size_t> idx) const {
  Matrix out(rows_, idx.size());
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* src = data_.data() + i * cols_;
    double* dst = out.data() + i * idx.size();
    for (std::size_t j = 0; j < idx.size(); ++j) dst[j] = src[idx[j]];
  }
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  constexpr std::size_t B = 32;
  for (std::size_t i0 = 0; i0 < rows_; i0 += B) {
    for (std::size_t j0 = 0; j0 < cols_; j0 += B) {
      const std::size_t i1 = std::min(rows_, i0 + B), j1 = std::min(cols_, j0 + B);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) t(j, i) = (*this)(i, j);
    }
  }
  return t;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_shape(same_shape(o), "operator+=: " + shape_str(*this) + " vs " + shape_str(o));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_shape(same_shape(o), "operator-=: " + shape_str(*this) + " vs " + shape_str(o));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  return kernels::parallel::gemm(kernels::Op::none, kernels::Op::none, a, b);
}
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  return kernels::parallel::gemm(kernels::Op::none, kernels::Op::transpose, a, b);
}
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  return kernels::parallel::gemm(kernels::Op::transpose, kernels::Op::none, a, b);
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  require_shape(a.cols() == x.size(), "matvec: " + shape_str(a) + " x vector(" + std::to_string(x.size()) + ")");
  std::vector<double> y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    const auto r = a.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.cols(), "vstack: " + shape_str(a) + " over " + shape_str(b));
  std::vector<double> d(a.values());
  d.insert(d.end(), b.values().begin(), b.values().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(d));
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  require_shape(a.rows() == b.rows(), "hstack: " + shape_str(a) + " beside " + shape_str(b));
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
    std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

void require_shape(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

std::string shape_str(const Matrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

}  // namespace kdla

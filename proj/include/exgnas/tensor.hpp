#pragma once

#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace exgnas {

/// Thrown for every shape mismatch in the numeric core.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& op, std::size_t got_rows, std::size_t got_cols,
                 std::size_t want_rows, std::size_t want_cols)
      : std::invalid_argument(format(op, got_rows, got_cols, want_rows, want_cols)) {}

 private:
  static std::string format(const std::string& op, std::size_t gr, std::size_t gc,
                            std::size_t wr, std::size_t wc) {
    std::ostringstream os;
    os << "dimension error (" << op << ", got " << gr << "x" << gc << ", expected " << wr
       << "x" << wc << ")";
    return os.str();
  }
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("matrix", data_.size(), 1, rows_ * cols_, 1);
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("matrix", 1, r.size(), 1, cols_);
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
inline Eigen::Map<RowMajor> as_eigen(Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<const RowMajor> as_eigen(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}
}  // namespace detail

// out (+)= a * b, optionally with either operand transposed.
inline void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& out,
                 bool accumulate) {
  auto ea = detail::as_eigen(a);
  auto eb = detail::as_eigen(b);
  auto eo = detail::as_eigen(out);
  if (!accumulate) eo.setZero();
  if (!trans_a && !trans_b)
    eo.noalias() += ea * eb;
  else if (trans_a && !trans_b)
    eo.noalias() += ea.transpose() * eb;
  else if (!trans_a && trans_b)
    eo.noalias() += ea * eb.transpose();
  else
    eo.noalias() += ea.transpose() * eb.transpose();
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul", b.rows(), b.cols(), a.cols(), b.cols());
  Matrix out(a.rows(), b.cols());
  gemm(a, false, b, false, out, false);
  return out;
}

/// Compressed sparse row matrix with explicit values.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return col_idx.size(); }

  Matrix to_dense() const {
    Matrix d(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col_idx[k]) += values[k];
    return d;
  }
};

// out (+)= S * x
inline void spmm_into(const CsrMatrix& s, const Matrix& x, Matrix& out, bool accumulate) {
  if (!accumulate) out.fill(0.0);
  const std::size_t k = x.cols();
  for (std::size_t r = 0; r < s.rows; ++r) {
    double* dst = out.data().data() + r * k;
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
      const double w = s.values[e];
      const double* src = x.data().data() + s.col_idx[e] * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] += w * src[j];
    }
  }
}

// out (+)= S^T * x
inline void spmm_transposed_into(const CsrMatrix& s, const Matrix& x, Matrix& out) {
  const std::size_t k = x.cols();
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* src = x.data().data() + r * k;
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) {
      const double w = s.values[e];
      double* dst = out.data().data() + s.col_idx[e] * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] += w * src[j];
    }
  }
}

}  // namespace exgnas

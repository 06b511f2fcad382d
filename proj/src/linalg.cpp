#include "tdclab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tdclab/errors.hpp"

namespace tdclab {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "matrix shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "matrix shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matrix shape mismatch in product");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Vector operator*(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), "matrix-vector shape mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2_sq(std::span<const double> x) { return dot(x, x); }
double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double norm1(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

double max_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

Vector add(std::span<const double> x, std::span<const double> y) {
  Vector out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return out;
}

Vector sub(std::span<const double> x, std::span<const double> y) {
  Vector out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return out;
}

Vector scaled(std::span<const double> x, double s) {
  Vector out(x.begin(), x.end());
  for (double& v : out) v *= s;
  return out;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vector row_times(std::span<const double> x, const Matrix& m) {
  require(x.size() == m.rows(), "row-vector shape mismatch");
  Vector out(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (x[i] == 0.0) continue;
    axpy(x[i], m.row(i), out);
  }
  return out;
}

Matrix outer(std::span<const double> x, std::span<const double> y) {
  Matrix m(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) m(i, j) = x[i] * y[j];
  return m;
}

double frobenius_norm(const Matrix& m) { return norm2(m.data()); }
double max_abs(const Matrix& m) { return max_abs(std::span<const double>(m.data())); }

Matrix symmetrized(const Matrix& m) {
  Matrix s = m + m.transpose();
  return s *= 0.5;
}

namespace {

// LU with partial pivoting, in place. Returns the permutation.
std::vector<std::size_t> lu_decompose(Matrix& lu) {
  const std::size_t n = lu.rows();
  require(lu.square(), "solve requires a square matrix");
  const double scale = std::max(max_abs(lu), std::numeric_limits<double>::min());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(p, k))) p = i;
    if (std::abs(lu(p, k)) <= scale * 1e-15)
      fail(ErrorKind::kSingularOperator, "zero pivot in Gaussian elimination");
    if (p != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(p).begin());
      std::swap(perm[k], perm[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      lu(i, k) = f;
      if (f == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
    }
  }
  return perm;
}

Vector lu_solve(const Matrix& lu, const std::vector<std::size_t>& perm, std::span<const double> rhs) {
  const std::size_t n = lu.rows();
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[perm[i]];
    for (std::size_t j = 0; j < i; ++j) s -= lu(i, j) * x[j];
    x[i] = s;
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
    x[i] = s / lu(i, i);
  }
  return x;
}

}  // namespace

Vector solve(const Matrix& m, std::span<const double> rhs) {
  require(m.rows() == rhs.size(), "solve: right-hand side has wrong length");
  Matrix lu = m;
  const auto perm = lu_decompose(lu);
  return lu_solve(lu, perm, rhs);
}

Matrix inverse(const Matrix& m) {
  Matrix lu = m;
  const auto perm = lu_decompose(lu);
  const std::size_t n = m.rows();
  Matrix inv(n, n);
  Vector e(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::fill(e.begin(), e.end(), 0.0);
    e[c] = 1.0;
    const Vector col = lu_solve(lu, perm, e);
    for (std::size_t r = 0; r < n; ++r) inv(r, c) = col[r];
  }
  return inv;
}

SymmetricEigen jacobi_eigen(const Matrix& m, double tol, int max_sweeps) {
  require(m.square(), "jacobi_eigen requires a square matrix");
  const std::size_t n = m.rows();
  Matrix a = symmetrized(m);
  Matrix v = Matrix::identity(n);
  const double threshold = tol * std::max(1.0, frobenius_norm(a));

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  SymmetricEigen out;
  double off = off_norm();
  while (off > threshold && out.sweeps < max_sweeps) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    ++out.sweeps;
    off = off_norm();
  }
  out.off_diagonal = off;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

Vector symmetric_eigenvalues(const Matrix& m) { return jacobi_eigen(m).values; }

double spectral_norm(const Matrix& m, double rel_tol, int max_iter) {
  const Matrix gram = m.transpose() * m;
  const std::size_t n = gram.rows();
  if (n == 0) return 0.0;
  // Deterministic, generic start vector.
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.1 * std::sin(static_cast<double>(i) + 1.0);
  double nx = norm2(x);
  for (double& v : x) v /= nx;
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector y = gram * x;
    const double next = dot(x, y);
    const double ny = norm2(y);
    if (ny == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

double condition_number(const Matrix& m) {
  const Vector ev = symmetric_eigenvalues(m.transpose() * m);
  const double lo = ev.front();
  const double hi = ev.back();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(hi / lo);
}

}  // namespace tdclab

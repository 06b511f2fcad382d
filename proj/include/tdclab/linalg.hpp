#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace tdclab {

using Vector = std::vector<double>;

// Dense row-major matrix. Dimensions in this project stay small (d <= 64 for
// features, a few hundred states), so nothing fancier is needed.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Matrix transpose() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

// Vector helpers.
double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);
double norm2_sq(std::span<const double> x);
double norm1(std::span<const double> x);
double max_abs(std::span<const double> x);
Vector add(std::span<const double> x, std::span<const double> y);
Vector sub(std::span<const double> x, std::span<const double> y);
Vector scaled(std::span<const double> x, double s);
void axpy(double a, std::span<const double> x, std::span<double> y);
Vector row_times(std::span<const double> x, const Matrix& m);  // x^T M

Matrix outer(std::span<const double> x, std::span<const double> y);
double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
Matrix symmetrized(const Matrix& m);

// Solves M x = rhs by Gaussian elimination with partial pivoting.
// Throws SingularOperator when a pivot vanishes relative to the matrix scale.
Vector solve(const Matrix& m, std::span<const double> rhs);
Matrix inverse(const Matrix& m);

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // column i pairs with values[i]
  int sweeps = 0;
  double off_diagonal = 0.0;
};

// Cyclic Jacobi rotation sweeps on a symmetric matrix until the off-diagonal
// Frobenius norm drops below tol * max(1, ||M||_F).
SymmetricEigen jacobi_eigen(const Matrix& m, double tol = 1e-14, int max_sweeps = 100);
Vector symmetric_eigenvalues(const Matrix& m);

// Largest singular value via power iteration on the Gram matrix M^T M; stops
// once successive Rayleigh quotients agree to rel_tol.
double spectral_norm(const Matrix& m, double rel_tol = 1e-10, int max_iter = 1'000'000);

// sigma_max / sigma_min from the Gram spectrum; +inf when rank deficient.
double condition_number(const Matrix& m);

}  // namespace tdclab

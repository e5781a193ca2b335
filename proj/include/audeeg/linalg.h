#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace audeeg::linalg {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Matrix transposed() const;
  Vector column(std::size_t c) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// Matrix product a·b.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double trace(const Matrix& a);

/// Column means of an n×d matrix.
Vector column_means(const Matrix& x);
/// Subtracts the given per-column offsets from every row.
Matrix center_columns(const Matrix& x, std::span<const double> means);

/// Throws ValidationError if any entry is NaN or infinite.
void require_finite(const Matrix& a, const char* what);

struct CovarianceSet {
  Matrix cxx;
  Matrix cyy;
  Matrix cxy;
  double reg = 0.0;
};

/// Zero-centered sample covariances with 1/(n-1) normalization. `reg` is
/// added to the diagonals of cxx and cyy only.
CovarianceSet covariances(const Matrix& x, const Matrix& y, double reg);

struct EigDecomposition {
  Vector eigenvalues;  ///< descending
  Matrix eigenvectors; ///< columns, orthonormal
};

struct EigOptions {
  double symmetry_tolerance = 1e-8;
  double tolerance = 1e-12;  ///< off-diagonal Frobenius norm, relative to ‖A‖F when ‖A‖F > 1
  int max_sweeps = 100;
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Each eigenvector is
/// signed so that its largest-magnitude entry is positive.
EigDecomposition eig_sym(const Matrix& a, const EigOptions& options = {});

/// Q·diag(max(λ, floor))^{-1/2}·Qᵀ.
Matrix inv_sqrt_sym(const Matrix& a, double eigen_floor = 1e-12);

/// Thin singular value decomposition a = U·diag(s)·Vᵀ with s descending.
struct SvdResult {
  Matrix u;  ///< m×r
  Vector s;  ///< r = min(m, n)
  Matrix v;  ///< n×r
};

/// One-sided (Hestenes) Jacobi SVD.
SvdResult svd(const Matrix& a);

enum class View { x, y };

struct CcaModel {
  Vector mean_x;
  Vector mean_y;
  Matrix proj_x;  ///< dx×k
  Matrix proj_y;  ///< dy×k
  Vector correlations;  ///< k values in [0,1], descending

  std::size_t components() const { return correlations.size(); }
};

struct CcaOptions {
  double eigen_floor = 1e-12;
};

/// Linear CCA via the SVD of T = cxx^{-1/2}·cxy·cyy^{-1/2}. Requires
/// n > max(dx, dy) unless reg > 0.
CcaModel cca_fit(const Matrix& x, const Matrix& y, std::size_t k, double reg,
                 const CcaOptions& options = {});

/// (X − mean)·proj for the selected view.
Matrix cca_transform(const CcaModel& model, const Matrix& x, View view);

}  // namespace audeeg::linalg

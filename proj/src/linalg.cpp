#include "audeeg/linalg.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "audeeg/error.h"

namespace audeeg::linalg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_eigen(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

MutMap as_eigen(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                         "x" + std::to_string(b.cols()));
  }
}

void require_square(const Matrix& a, const char* op) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionError(std::string(op) + ": expected a non-empty square matrix, got " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Vector Matrix::column(std::size_t c) const {
  Vector v(rows_);
  for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
  return v;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
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

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Matrix out(a.rows(), b.cols());
  if (out.empty()) return out;
  if (a.cols() == 0) return out;
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: row counts " + std::to_string(a.rows()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Matrix out(a.cols(), b.cols());
  if (out.empty() || a.rows() == 0) return out;
  as_eigen(out).noalias() = as_eigen(a).transpose() * as_eigen(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: column counts " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.cols()) + " differ");
  }
  Matrix out(a.rows(), b.rows());
  if (out.empty() || a.cols() == 0) return out;
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b).transpose();
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

double trace(const Matrix& a) {
  require_square(a, "trace");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

Vector column_means(const Matrix& x) {
  Vector mean(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += row[c];
  }
  if (x.rows() > 0)
    for (double& m : mean) m /= static_cast<double>(x.rows());
  return mean;
}

Matrix center_columns(const Matrix& x, std::span<const double> means) {
  if (means.size() != x.cols()) {
    throw DimensionError("center_columns: " + std::to_string(means.size()) + " means for " +
                         std::to_string(x.cols()) + " columns");
  }
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] -= means[c];
  }
  return out;
}

void require_finite(const Matrix& a, const char* what) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a.values()[i])) {
      throw ValidationError(std::string(what) + ": non-finite entry at (" +
                            std::to_string(i / std::max<std::size_t>(a.cols(), 1)) + ", " +
                            std::to_string(i % std::max<std::size_t>(a.cols(), 1)) + ")");
    }
  }
}

CovarianceSet covariances(const Matrix& x, const Matrix& y, double reg) {
  if (x.rows() != y.rows()) {
    throw DimensionError("covariances: views have " + std::to_string(x.rows()) + " and " +
                         std::to_string(y.rows()) + " rows");
  }
  if (x.rows() < 2) throw DimensionError("covariances: need at least 2 rows");
  if (!(reg >= 0.0) || !std::isfinite(reg)) {
    throw ValidationError("covariances: reg must be a finite non-negative value");
  }
  require_finite(x, "covariances(X)");
  require_finite(y, "covariances(Y)");

  const Matrix xc = center_columns(x, column_means(x));
  const Matrix yc = center_columns(y, column_means(y));
  const double scale = 1.0 / static_cast<double>(x.rows() - 1);

  CovarianceSet cov;
  cov.reg = reg;
  cov.cxx = matmul_tn(xc, xc) * scale;
  cov.cyy = matmul_tn(yc, yc) * scale;
  cov.cxy = matmul_tn(xc, yc) * scale;
  for (std::size_t i = 0; i < cov.cxx.rows(); ++i) cov.cxx(i, i) += reg;
  for (std::size_t i = 0; i < cov.cyy.rows(); ++i) cov.cyy(i, i) += reg;
  return cov;
}

EigDecomposition eig_sym(const Matrix& input, const EigOptions& options) {
  require_square(input, "eig_sym");
  require_finite(input, "eig_sym");
  const std::size_t n = input.rows();
  const double scale = std::max(1.0, max_abs(input));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > options.symmetry_tolerance * scale) {
        throw ValidationError("eig_sym: matrix is not symmetric at (" + std::to_string(i) +
                              ", " + std::to_string(j) + ")");
      }
    }
  }

  // Work on the symmetrized copy; v holds the accumulated rotations.
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  const double norm = frobenius_norm(a);
  const double target = options.tolerance * std::max(1.0, norm);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  bool converged = off_norm() <= target;
  for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Entries negligible against both diagonals are dropped outright.
        if (std::abs(apq) < std::numeric_limits<double>::epsilon() * 1e-3 *
                                std::sqrt(std::abs(app * aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_norm() <= target;
  }
  if (!converged) {
    throw NumericError("eig_sym: Jacobi iteration did not converge in " +
                       std::to_string(options.max_sweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.eigenvalues[c] = a(src, src);
    std::size_t arg = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(v(r, src)) > std::abs(v(arg, src))) arg = r;
    const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = sign * v(r, src);
  }
  return out;
}

Matrix inv_sqrt_sym(const Matrix& a, double eigen_floor) {
  const EigDecomposition eig = eig_sym(a);
  const std::size_t n = a.rows();
  Vector scale(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = std::max(eig.eigenvalues[i], eigen_floor);
    if (!(lam > 0.0)) {
      throw NumericError("inv_sqrt_sym: eigenvalue " + std::to_string(eig.eigenvalues[i]) +
                         " is not positive after flooring");
    }
    scale[i] = 1.0 / std::sqrt(lam);
  }
  Matrix qs = eig.eigenvectors;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) qs(r, c) *= scale[c];
  Matrix out = matmul_nt(qs, eig.eigenvectors);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = 0.5 * (out(i, j) + out(j, i));
      out(i, j) = out(j, i) = m;
    }
  return out;
}

namespace {

// Hestenes iteration on the columns of a tall matrix (m ≥ n). Columns are
// stored as rows of `w` for contiguous access.
SvdResult svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix w = a.transposed();  // n×m, row j is column j of a
  Matrix v = Matrix::identity(n);
  const double eps = std::numeric_limits<double>::epsilon();

  constexpr int kMaxSweeps = 100;
  bool rotated = true;
  for (int sweep = 0; sweep < kMaxSweeps && rotated; ++sweep) {
    rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto wp = w.row(p);
        auto wq = w.row(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          alpha += wp[k] * wp[k];
          beta += wq[k] * wq[k];
          gamma += wp[k] * wq[k];
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double xp = wp[k];
          const double xq = wq[k];
          wp[k] = c * xp - s * xq;
          wq[k] = s * xp + c * xq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vp = v(k, p);
          const double vq = v(k, q);
          v(k, p) = c * vp - s * vq;
          v(k, q) = s * vp + c * vq;
        }
      }
    }
    if (sweep + 1 == kMaxSweeps && rotated) {
      throw NumericError("svd: one-sided Jacobi did not converge");
    }
  }

  Vector sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (double x : w.row(j)) s += x * x;
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

  SvdResult out;
  out.s.resize(n);
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  const double smax = n ? sigma[order[0]] : 0.0;
  std::vector<bool> defined(n, false);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.s[c] = sigma[src];
    for (std::size_t r = 0; r < n; ++r) out.v(r, c) = v(r, src);
    if (sigma[src] > eps * std::max(smax, 1e-300) * static_cast<double>(m)) {
      for (std::size_t r = 0; r < m; ++r) out.u(r, c) = w(src, r) / sigma[src];
      defined[c] = true;
    }
  }
  // Complete left vectors for null singular values by Gram-Schmidt against
  // the unit basis.
  std::size_t basis = 0;
  for (std::size_t c = 0; c < n; ++c) {
    if (defined[c]) continue;
    while (basis < m) {
      Vector cand(m, 0.0);
      cand[basis++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < n; ++o) {
          if (!defined[o]) continue;
          double dot = 0.0;
          for (std::size_t r = 0; r < m; ++r) dot += out.u(r, o) * cand[r];
          for (std::size_t r = 0; r < m; ++r) cand[r] -= dot * out.u(r, o);
        }
      }
      double nrm = 0.0;
      for (double x : cand) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-6) {
        for (std::size_t r = 0; r < m; ++r) out.u(r, c) = cand[r] / nrm;
        defined[c] = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace

SvdResult svd(const Matrix& a) {
  require_finite(a, "svd");
  if (a.rows() >= a.cols()) return svd_tall(a);
  SvdResult t = svd_tall(a.transposed());
  return SvdResult{std::move(t.v), std::move(t.s), std::move(t.u)};
}

CcaModel cca_fit(const Matrix& x, const Matrix& y, std::size_t k, double reg,
                 const CcaOptions& options) {
  const std::size_t n = x.rows();
  const std::size_t dx = x.cols();
  const std::size_t dy = y.cols();
  if (k == 0 || k > std::min(dx, dy)) {
    throw DimensionError("cca_fit: k=" + std::to_string(k) + " must be in [1, min(dx, dy)=" +
                         std::to_string(std::min(dx, dy)) + "]");
  }
  if (reg == 0.0 && n <= std::max(dx, dy)) {
    throw DimensionError("cca_fit: unregularized fit needs more rows (" + std::to_string(n) +
                         ") than columns (" + std::to_string(std::max(dx, dy)) + ")");
  }
  CovarianceSet cov = covariances(x, y, reg);

  auto whitening = [&](const Matrix& c, const char* name) {
    const EigDecomposition eig = eig_sym(c);
    const double top = eig.eigenvalues.front();
    const double bottom = eig.eigenvalues.back();
    if (!(top > 0.0) || bottom <= 1e-13 * top) {
      throw NumericError(std::string("cca_fit: ") + name +
                         " is rank deficient; increase reg");
    }
    return inv_sqrt_sym(c, options.eigen_floor);
  };
  const Matrix wx = whitening(cov.cxx, "cxx");
  const Matrix wy = whitening(cov.cyy, "cyy");
  const Matrix t = matmul(matmul(wx, cov.cxy), wy);
  const SvdResult s = svd(t);

  CcaModel model;
  model.mean_x = column_means(x);
  model.mean_y = column_means(y);
  Matrix uk(dx, k), vk(dy, k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < dx; ++r) uk(r, c) = s.u(r, c);
    for (std::size_t r = 0; r < dy; ++r) vk(r, c) = s.v(r, c);
  }
  model.proj_x = matmul(wx, uk);
  model.proj_y = matmul(wy, vk);
  model.correlations.resize(k);
  for (std::size_t c = 0; c < k; ++c) model.correlations[c] = std::clamp(s.s[c], 0.0, 1.0);
  return model;
}

Matrix cca_transform(const CcaModel& model, const Matrix& x, View view) {
  const Vector& mean = view == View::x ? model.mean_x : model.mean_y;
  const Matrix& proj = view == View::x ? model.proj_x : model.proj_y;
  if (x.cols() != proj.rows()) {
    throw DimensionError("cca_transform: input has " + std::to_string(x.cols()) +
                         " columns, model view expects " + std::to_string(proj.rows()));
  }
  return matmul(center_columns(x, mean), proj);
}

}  // namespace audeeg::linalg

#include "audeeg/dcca.h"

#include <cmath>
#include <string>

#include "audeeg/error.h"

namespace audeeg::dcca {

using linalg::Matrix;
using linalg::Vector;

namespace {

struct Whitening {
  Matrix q;        // eigenvectors
  Vector root;     // sqrt of floored eigenvalues
  std::vector<bool> floored;
  Matrix inv_sqrt; // q·diag(1/root)·qᵀ
};

Whitening whiten(const Matrix& c, double eigen_floor) {
  linalg::EigDecomposition eig = linalg::eig_sym(c);
  const std::size_t n = c.rows();
  Whitening w;
  w.q = std::move(eig.eigenvectors);
  w.root.resize(n);
  w.floored.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = eig.eigenvalues[i];
    w.floored[i] = lam < eigen_floor;
    const double mu = w.floored[i] ? eigen_floor : lam;
    if (!(mu > 0.0)) {
      throw NumericError("dcca_loss: covariance eigenvalue " + std::to_string(lam) +
                         " is not positive after flooring");
    }
    w.root[i] = std::sqrt(mu);
  }
  Matrix qs = w.q;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col) qs(r, col) /= w.root[col];
  w.inv_sqrt = linalg::matmul_nt(qs, w.q);
  return w;
}

// Pulls a gradient with respect to C^{-1/2} back to C through the
// eigendecomposition (Daleckii-Krein). For f(λ) = λ^{-1/2} the divided
// difference has the cancellation-free form −1/(√λi·√λj·(√λi + √λj)).
Matrix pull_back(const Whitening& w, const Matrix& grad_inv_sqrt) {
  const std::size_t n = w.q.rows();
  Matrix g = grad_inv_sqrt;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (g(i, j) + g(j, i));
      g(i, j) = g(j, i) = s;
    }
  Matrix inner = linalg::matmul(linalg::matmul_tn(w.q, g), w.q);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double f = 0.0;
      if (!(w.floored[i] || w.floored[j])) {
        const double a = w.root[i];
        const double b = w.root[j];
        f = -1.0 / (a * b * (a + b));
      }
      inner(i, j) *= f;
    }
  }
  return linalg::matmul_nt(linalg::matmul(w.q, inner), w.q);
}

void validate(const Matrix& x, const Matrix& y, double reg) {
  if (x.rows() != y.rows()) {
    throw DimensionError("dcca_loss: views have " + std::to_string(x.rows()) + " and " +
                         std::to_string(y.rows()) + " rows");
  }
  if (x.rows() < 2) throw ValidationError("dcca_loss: need at least 2 rows");
  if (!(reg > 0.0)) throw ValidationError("dcca_loss: reg must be positive");
}

}  // namespace

DccaLossResult dcca_loss(const Matrix& x, const Matrix& y, double reg, double eigen_floor) {
  validate(x, y, reg);
  const linalg::CovarianceSet cov = linalg::covariances(x, y, reg);
  const Whitening wx = whiten(cov.cxx, eigen_floor);
  const Whitening wy = whiten(cov.cyy, eigen_floor);

  const Matrix a_cxy = linalg::matmul(wx.inv_sqrt, cov.cxy);
  const Matrix t = linalg::matmul(a_cxy, wy.inv_sqrt);
  const double norm = linalg::frobenius_norm(t);
  if (!std::isfinite(norm)) throw NumericError("dcca_loss: non-finite correlation matrix");

  DccaLossResult out;
  out.loss = -norm;
  out.total_correlation = norm;

  const std::size_t n = x.rows();
  const double inv_n1 = 1.0 / static_cast<double>(n - 1);
  if (norm == 0.0) {
    out.grad_x = Matrix(n, x.cols());
    out.grad_y = Matrix(n, y.cols());
    return out;
  }

  // dL/dT = −T/‖T‖.
  const Matrix g_t = t * (-1.0 / norm);
  const Matrix g_cxy = linalg::matmul(linalg::matmul(wx.inv_sqrt, g_t), wy.inv_sqrt);
  // dL/dA = G_T·B·Cxyᵀ and dL/dB = (A·Cxy)ᵀ·G_T, with A, B the whitening maps.
  const Matrix g_a = linalg::matmul_nt(linalg::matmul(g_t, wy.inv_sqrt), cov.cxy);
  const Matrix g_b = linalg::matmul_tn(a_cxy, g_t);
  const Matrix g_cxx = pull_back(wx, g_a);
  const Matrix g_cyy = pull_back(wy, g_b);

  const Matrix xc = linalg::center_columns(x, linalg::column_means(x));
  const Matrix yc = linalg::center_columns(y, linalg::column_means(y));

  Matrix gx = linalg::matmul(xc, g_cxx) * 2.0;
  gx += linalg::matmul_nt(yc, g_cxy);
  gx *= inv_n1;
  Matrix gy = linalg::matmul(yc, g_cyy) * 2.0;
  gy += linalg::matmul(xc, g_cxy);
  gy *= inv_n1;

  // Centering is a projection; apply it so the column sums vanish exactly.
  out.grad_x = linalg::center_columns(gx, linalg::column_means(gx));
  out.grad_y = linalg::center_columns(gy, linalg::column_means(gy));
  return out;
}

double dcca_total_correlation(const Matrix& x, const Matrix& y, double reg,
                              double eigen_floor) {
  validate(x, y, reg);
  const linalg::CovarianceSet cov = linalg::covariances(x, y, reg);
  const Whitening wx = whiten(cov.cxx, eigen_floor);
  const Whitening wy = whiten(cov.cyy, eigen_floor);
  return linalg::frobenius_norm(
      linalg::matmul(linalg::matmul(wx.inv_sqrt, cov.cxy), wy.inv_sqrt));
}

}  // namespace audeeg::dcca

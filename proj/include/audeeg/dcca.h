#pragma once

#include "audeeg/linalg.h"

namespace audeeg::dcca {

struct DccaLossResult {
  double loss = 0.0;               ///< −‖T‖F, never positive
  double total_correlation = 0.0;  ///< ‖T‖F
  linalg::Matrix grad_x;
  linalg::Matrix grad_y;
};

/// Negative Frobenius norm of T = cxx^{-1/2}·cxy·cyy^{-1/2} built from the
/// regularized, zero-centered covariances of the two views, with exact
/// gradients with respect to every entry of X and Y.
///
/// Eigenvalues below `eigen_floor` are clamped and treated as constants in
/// the gradient.
DccaLossResult dcca_loss(const linalg::Matrix& x, const linalg::Matrix& y, double reg,
                         double eigen_floor = 1e-12);

/// Forward value only; skips the gradient work.
double dcca_total_correlation(const linalg::Matrix& x, const linalg::Matrix& y, double reg,
                              double eigen_floor = 1e-12);

}  // namespace audeeg::dcca

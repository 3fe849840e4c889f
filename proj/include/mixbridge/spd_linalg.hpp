#pragma once

#include <Eigen/Dense>

namespace mixbridge {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Relative eigenvalue floor: eigenvalues below kEigFloor * lambda_max are
/// rejected as not positive definite.
inline constexpr double kEigFloor = 1e-12;
/// Relative asymmetry tolerance, scaled by the largest absolute entry.
inline constexpr double kSymmetryTol = 1e-12;

/// Symmetric positive-definite matrix together with its eigendecomposition.
///
/// Construction validates symmetry, symmetrizes as (A + A^T)/2, and factorizes
/// once; square root, inverse, inverse square root and log-determinant all
/// reuse that factorization.
class SpdMatrix {
 public:
  /// Throws NotSymmetric or NotPositiveDefinite.
  explicit SpdMatrix(const Matrix& a);

  /// Symmetrize and clamp eigenvalues from below at `floor` (absolute) instead
  /// of rejecting. Used by EM fitting only.
  static SpdMatrix clamped(const Matrix& a, double floor);

  static SpdMatrix identity(int dim);

  int dim() const { return static_cast<int>(matrix_.rows()); }
  const Matrix& matrix() const { return matrix_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& eigenvectors() const { return eigenvectors_; }

  Matrix sqrt() const;
  Matrix inv_sqrt() const;
  Matrix inverse() const;
  double logdet() const;

 private:
  SpdMatrix(Matrix matrix, Vector eigenvalues, Matrix eigenvectors);

  Matrix from_spectrum(const Vector& values) const;

  Matrix matrix_;
  Vector eigenvalues_;
  Matrix eigenvectors_;
};

SpdMatrix spd_sqrt(const SpdMatrix& a);
SpdMatrix spd_inverse(const SpdMatrix& a);
double spd_logdet(const SpdMatrix& a);

/// (A + A^T) / 2.
Matrix symmetrize(const Matrix& a);

}  // namespace mixbridge

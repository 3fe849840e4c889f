#include "mixbridge/spd_linalg.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "mixbridge/error.hpp"

namespace mixbridge {
namespace {

void check_square(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    fail(ErrorKind::DimensionMismatch, "SPD matrix must be square and non-empty");
  }
  if (!a.allFinite()) fail(ErrorKind::NonFinite, "SPD matrix has non-finite entries");
}

void check_symmetric(const Matrix& a) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol * scale) {
    std::ostringstream msg;
    msg << "asymmetry " << asym << " exceeds " << kSymmetryTol << " * " << scale;
    fail(ErrorKind::NotSymmetric, msg.str());
  }
}

}  // namespace

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

SpdMatrix::SpdMatrix(Matrix matrix, Vector eigenvalues, Matrix eigenvectors)
    : matrix_(std::move(matrix)),
      eigenvalues_(std::move(eigenvalues)),
      eigenvectors_(std::move(eigenvectors)) {}

SpdMatrix::SpdMatrix(const Matrix& a) {
  check_square(a);
  check_symmetric(a);
  matrix_ = symmetrize(a);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(matrix_);
  if (solver.info() != Eigen::Success) {
    fail(ErrorKind::NotPositiveDefinite, "eigendecomposition failed");
  }
  eigenvalues_ = solver.eigenvalues();
  eigenvectors_ = solver.eigenvectors();
  const double largest = eigenvalues_.maxCoeff();
  const double smallest = eigenvalues_.minCoeff();
  if (!(largest > 0.0) || smallest < kEigFloor * largest) {
    std::ostringstream msg;
    msg << "eigenvalue " << smallest << " below floor " << kEigFloor << " * " << largest;
    fail(ErrorKind::NotPositiveDefinite, msg.str());
  }
}

SpdMatrix SpdMatrix::clamped(const Matrix& a, double floor) {
  check_square(a);
  Matrix sym = symmetrize(a);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  Vector values = solver.eigenvalues().cwiseMax(floor);
  Matrix vectors = solver.eigenvectors();
  Matrix rebuilt = vectors * values.asDiagonal() * vectors.transpose();
  return SpdMatrix(symmetrize(rebuilt), std::move(values), std::move(vectors));
}

SpdMatrix SpdMatrix::identity(int dim) {
  return SpdMatrix(Matrix::Identity(dim, dim), Vector::Ones(dim), Matrix::Identity(dim, dim));
}

Matrix SpdMatrix::from_spectrum(const Vector& values) const {
  return symmetrize(eigenvectors_ * values.asDiagonal() * eigenvectors_.transpose());
}

Matrix SpdMatrix::sqrt() const { return from_spectrum(eigenvalues_.cwiseSqrt()); }

Matrix SpdMatrix::inv_sqrt() const { return from_spectrum(eigenvalues_.cwiseSqrt().cwiseInverse()); }

Matrix SpdMatrix::inverse() const { return from_spectrum(eigenvalues_.cwiseInverse()); }

double SpdMatrix::logdet() const { return eigenvalues_.array().log().sum(); }

SpdMatrix spd_sqrt(const SpdMatrix& a) { return SpdMatrix(a.sqrt()); }

SpdMatrix spd_inverse(const SpdMatrix& a) { return SpdMatrix(a.inverse()); }

double spd_logdet(const SpdMatrix& a) { return a.logdet(); }

}  // namespace mixbridge

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mixbridge {

enum class ErrorKind {
  NotSymmetric,
  NotPositiveDefinite,
  DimensionMismatch,
  DomainError,
  EmptyCluster,
  InvalidSimplex,
  PatternInfeasible,
  NotConverged,
  SupportViolation,
  NonFinite,
  BoxTooSmall,
  DegeneratePosterior,
  UnknownPreset,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind is
/// stable and is what the CLI serializes into its error document.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Iterative solver stopped before meeting its tolerance. Carries the
/// residuals at exit and, where meaningful, the best iterate reached.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& message, int iterations, std::vector<double> residuals,
               Eigen::MatrixXd best_iterate = {});

  int iterations() const noexcept { return iterations_; }
  const std::vector<double>& residuals() const noexcept { return residuals_; }
  const Eigen::MatrixXd& best_iterate() const noexcept { return best_iterate_; }

 private:
  int iterations_;
  std::vector<double> residuals_;
  Eigen::MatrixXd best_iterate_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require_dims(long expected, long actual, const char* what) {
  if (expected != actual) {
    fail(ErrorKind::DimensionMismatch, std::string(what) + ": expected dimension " +
                                           std::to_string(expected) + ", got " +
                                           std::to_string(actual));
  }
}

void require_unit_time(double t, const char* what);

}  // namespace mixbridge

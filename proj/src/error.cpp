#include "mixbridge/error.hpp"

#include <utility>

namespace mixbridge {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::InvalidSimplex: return "InvalidSimplex";
    case ErrorKind::PatternInfeasible: return "PatternInfeasible";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::SupportViolation: return "SupportViolation";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::BoxTooSmall: return "BoxTooSmall";
    case ErrorKind::DegeneratePosterior: return "DegeneratePosterior";
    case ErrorKind::UnknownPreset: return "UnknownPreset";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

NotConverged::NotConverged(const std::string& message, int iterations,
                           std::vector<double> residuals, Eigen::MatrixXd best_iterate)
    : Error(ErrorKind::NotConverged, message),
      iterations_(iterations),
      residuals_(std::move(residuals)),
      best_iterate_(std::move(best_iterate)) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

void require_unit_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    fail(ErrorKind::DomainError, std::string(what) + ": t=" + std::to_string(t) +
                                     " outside [0, 1]");
  }
}

}  // namespace mixbridge

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace robustlaw {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A prediction map x (d-vector) -> K-vector. Realizations of a function class,
/// conditional-mean maps and ad-hoc test functions all share this shape.
using Predictor = std::function<Vec(const Vec&)>;

enum class ErrorCode {
  DomainViolation,
  MixtureNotSupported,
  ParamOutOfDomain,
  NetBudgetExceeded,
  NonFiniteLoss,
  ConfigInfeasible,
  ConfigError,
  NumericError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::MixtureNotSupported: return "MixtureNotSupported";
    case ErrorCode::ParamOutOfDomain: return "ParamOutOfDomain";
    case ErrorCode::NetBudgetExceeded: return "NetBudgetExceeded";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ConfigInfeasible: return "ConfigInfeasible";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NumericError: return "NumericError";
  }
  return "Unknown";
}

}  // namespace robustlaw

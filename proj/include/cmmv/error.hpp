#ifndef CMMV_ERROR_HPP
#define CMMV_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmmv {

enum class ErrorKind {
  invalid_parameterization,
  out_of_horizon,
  flat_region,
  no_implied_vol,
  covariance_degenerate,
  protocol_misuse,
  insufficient_data,
  fit_failed,
  parity_regression_failed,
  parse_error,
  schema_mismatch,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameterization: return "invalid-parameterization";
    case ErrorKind::out_of_horizon: return "out-of-horizon";
    case ErrorKind::flat_region: return "flat-region";
    case ErrorKind::no_implied_vol: return "no-implied-vol";
    case ErrorKind::covariance_degenerate: return "covariance-degenerate";
    case ErrorKind::protocol_misuse: return "protocol-misuse";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::fit_failed: return "fit-failed";
    case ErrorKind::parity_regression_failed: return "parity-regression-failed";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::schema_mismatch: return "schema-mismatch";
  }
  return "unknown";
}

/// Library-wide exception. `kind()` lets callers (the CLI in particular)
/// map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cmmv

#endif  // CMMV_ERROR_HPP

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace netinv {

enum class ErrorCode {
  kDimensionMismatch,
  kDegenerate,
  kInfeasible,
  kNotPsd,
  kEmptyPolytope,
  kDiverged,
  kNotSummable,
  kOutOfRange,
  kNoGuarantee,
  kNoValidContract,
  kSmallGainViolated,
  kInsufficientHorizon,
  kNotAnEquilibrium,
  kIslanded,
  kSingular,
  kSupervisionInfeasible,
  kSourceMissing,
  kPlanInfeasible,
  kConfig,
  kParse,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `index()` carries the offending row, node or
/// sample when one exists (-1 otherwise).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, int index = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  int index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  int index_;
};

}  // namespace netinv

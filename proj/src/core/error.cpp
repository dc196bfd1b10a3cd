#include "netinv/error.hpp"

namespace netinv {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDegenerate: return "Degenerate";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kNotPsd: return "NotPsd";
    case ErrorCode::kEmptyPolytope: return "EmptyPolytope";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kNotSummable: return "NotSummable";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kNoGuarantee: return "NoGuarantee";
    case ErrorCode::kNoValidContract: return "NoValidContract";
    case ErrorCode::kSmallGainViolated: return "SmallGainViolated";
    case ErrorCode::kInsufficientHorizon: return "InsufficientHorizon";
    case ErrorCode::kNotAnEquilibrium: return "NotAnEquilibrium";
    case ErrorCode::kIslanded: return "Islanded";
    case ErrorCode::kSingular: return "Singular";
    case ErrorCode::kSupervisionInfeasible: return "SupervisionInfeasible";
    case ErrorCode::kSourceMissing: return "SourceMissing";
    case ErrorCode::kPlanInfeasible: return "PlanInfeasible";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kParse: return "Parse";
  }
  return "Unknown";
}

}  // namespace netinv

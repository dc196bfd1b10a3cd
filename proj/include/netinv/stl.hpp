#pragma once

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace netinv::stl {

enum class Kind { kTrue, kPredicate, kNot, kAnd, kOr, kUntil, kAlways, kEventually };
enum class Cmp { kGe, kGt, kLe, kLt };

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  Kind kind = Kind::kTrue;
  std::string signal;  // predicates only
  Cmp cmp = Cmp::kGe;
  double threshold = 0.0;
  double a = 0.0;  // temporal interval [a, b], seconds
  double b = 0.0;
  std::vector<FormulaPtr> children;
};

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

FormulaPtr truth();
FormulaPtr falsity();
FormulaPtr pred(std::string signal, Cmp cmp, double threshold);
FormulaPtr ge(std::string signal, double threshold);
FormulaPtr le(std::string signal, double threshold);
FormulaPtr neg(FormulaPtr f);
FormulaPtr conj(std::vector<FormulaPtr> fs);
FormulaPtr disj(std::vector<FormulaPtr> fs);
FormulaPtr until(double a, double b, FormulaPtr lhs, FormulaPtr rhs);
FormulaPtr always(double a, double b, FormulaPtr f);
FormulaPtr eventually(double a, double b, FormulaPtr f);
/// |signal| <= bound as a conjunction of two predicates.
FormulaPtr abs_le(const std::string& signal, double bound);

/// Prefix form, e.g. `(always 0 inf (ge omega_2 -0.05))`. Throws Error{kParse}.
FormulaPtr parse(std::string_view text);
std::string to_string(const Formula& f);

/// Uniformly sampled named channels.
class SampledTrace {
 public:
  SampledTrace(double ts, std::vector<std::string> names, std::vector<std::vector<double>> channels);
  /// Checks the timestamps are uniform within 1e-12; throws Error{kDimensionMismatch}.
  static SampledTrace from_timestamps(const std::vector<double>& t, std::vector<std::string> names,
                                      std::vector<std::vector<double>> channels);

  double ts() const { return ts_; }
  Eigen::Index size() const { return size_; }
  /// Channel index, throws Error{kConfig} when unknown.
  Eigen::Index channel(const std::string& name) const;
  double value(Eigen::Index channel, Eigen::Index t) const {
    return channels_[static_cast<size_t>(channel)][static_cast<size_t>(t)];
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  double ts_;
  Eigen::Index size_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> channels_;
};

/// Kleene three-valued result; kUnknown only arises from a finite interval
/// reaching past the end of the trace.
enum class Tri { kFalse, kTrue, kUnknown };

struct Verdict {
  Tri value = Tri::kUnknown;
  /// An unbounded interval was cut at the trace end.
  bool clipped = false;
};

/// Truth value at every sample (index t of the result is the value at t).
std::vector<Tri> monitor(const Formula& f, const SampledTrace& trace, bool* clipped = nullptr);

Verdict check(const Formula& f, const SampledTrace& trace, Eigen::Index t = 0);

/// Boolean value at sample t; throws Error{kInsufficientHorizon} when the
/// trace is too short to decide.
bool evaluate(const Formula& f, const SampledTrace& trace, Eigen::Index t = 0);

/// f1 => f2 on every trace of the set (decidable traces only; undecided
/// ones are skipped).
bool entails(const Formula& f1, const Formula& f2, const std::vector<SampledTrace>& traces);

/// Sample offsets [floor(a/ts), ceil(b/ts)]; hi is -1 for an unbounded b.
std::pair<Eigen::Index, Eigen::Index> interval_steps(double a, double b, double ts);

}  // namespace netinv::stl

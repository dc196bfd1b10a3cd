#include "netinv/stl.hpp"

#include "netinv/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace netinv::stl {

using Eigen::Index;

namespace {

FormulaPtr make(Kind kind, std::vector<FormulaPtr> children = {}, double a = 0.0, double b = 0.0) {
  auto f = std::make_shared<Formula>();
  f->kind = kind;
  f->children = std::move(children);
  f->a = a;
  f->b = b;
  return f;
}

void check_interval(double a, double b) {
  if (!(a >= 0.0) || !(b >= a) || std::isnan(b))
    throw Error(ErrorCode::kParse, "temporal interval must satisfy 0 <= a <= b");
}

}  // namespace

FormulaPtr truth() { return make(Kind::kTrue); }
FormulaPtr falsity() { return neg(truth()); }

FormulaPtr pred(std::string signal, Cmp cmp, double threshold) {
  if (!std::isfinite(threshold)) throw Error(ErrorCode::kParse, "predicate threshold must be finite");
  auto f = std::make_shared<Formula>();
  f->kind = Kind::kPredicate;
  f->signal = std::move(signal);
  f->cmp = cmp;
  f->threshold = threshold;
  return f;
}

FormulaPtr ge(std::string signal, double threshold) { return pred(std::move(signal), Cmp::kGe, threshold); }
FormulaPtr le(std::string signal, double threshold) { return pred(std::move(signal), Cmp::kLe, threshold); }
FormulaPtr neg(FormulaPtr f) { return make(Kind::kNot, {std::move(f)}); }
FormulaPtr conj(std::vector<FormulaPtr> fs) { return make(Kind::kAnd, std::move(fs)); }
FormulaPtr disj(std::vector<FormulaPtr> fs) { return make(Kind::kOr, std::move(fs)); }

FormulaPtr until(double a, double b, FormulaPtr lhs, FormulaPtr rhs) {
  check_interval(a, b);
  return make(Kind::kUntil, {std::move(lhs), std::move(rhs)}, a, b);
}
FormulaPtr always(double a, double b, FormulaPtr f) {
  check_interval(a, b);
  return make(Kind::kAlways, {std::move(f)}, a, b);
}
FormulaPtr eventually(double a, double b, FormulaPtr f) {
  check_interval(a, b);
  return make(Kind::kEventually, {std::move(f)}, a, b);
}

FormulaPtr abs_le(const std::string& signal, double bound) {
  return conj({le(signal, bound), ge(signal, -bound)});
}

// ---------------------------------------------------------------- parsing

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  FormulaPtr parse_all() {
    FormulaPtr f = formula();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing input");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kParse, what + " at offset " + std::to_string(pos_), static_cast<int>(pos_));
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string token() {
    skip_ws();
    const size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')')
      ++pos_;
    if (start == pos_) fail("expected a token");
    return std::string(text_.substr(start, pos_ - start));
  }

  double number() {
    const std::string t = token();
    if (t == "inf" || t == "+inf") return kUnbounded;
    try {
      size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) fail("bad number '" + t + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + t + "'");
    }
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  FormulaPtr formula() {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] != '(') {
      const std::string t = token();
      if (t == "true") return truth();
      if (t == "false") return falsity();
      fail("unexpected atom '" + t + "'");
    }
    expect('(');
    const std::string op = token();
    FormulaPtr out;
    if (op == "ge" || op == "gt" || op == "le" || op == "lt") {
      const std::string sig = token();
      const double thr = number();
      const Cmp cmp = op == "ge" ? Cmp::kGe : op == "gt" ? Cmp::kGt : op == "le" ? Cmp::kLe : Cmp::kLt;
      out = pred(sig, cmp, thr);
    } else if (op == "not") {
      out = neg(formula());
    } else if (op == "and" || op == "or") {
      std::vector<FormulaPtr> kids;
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != ')') {
        kids.push_back(formula());
        skip_ws();
      }
      if (kids.empty()) fail("empty " + op);
      out = op == "and" ? conj(std::move(kids)) : disj(std::move(kids));
    } else if (op == "always" || op == "eventually") {
      const double a = number();
      const double b = number();
      FormulaPtr f = formula();
      out = op == "always" ? always(a, b, f) : eventually(a, b, f);
    } else if (op == "until") {
      const double a = number();
      const double b = number();
      FormulaPtr lhs = formula();
      FormulaPtr rhs = formula();
      out = until(a, b, lhs, rhs);
    } else {
      fail("unknown operator '" + op + "'");
    }
    expect(')');
    return out;
  }

  std::string_view text_;
  size_t pos_ = 0;
};

std::string num(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

FormulaPtr parse(std::string_view text) { return Parser(text).parse_all(); }

std::string to_string(const Formula& f) {
  auto kids = [&](std::string s) {
    for (const auto& c : f.children) s += " " + to_string(*c);
    return s + ")";
  };
  switch (f.kind) {
    case Kind::kTrue:
      return "true";
    case Kind::kPredicate: {
      static const char* names[] = {"ge", "gt", "le", "lt"};
      return std::string("(") + names[static_cast<int>(f.cmp)] + " " + f.signal + " " + num(f.threshold) + ")";
    }
    case Kind::kNot:
      return kids("(not");
    case Kind::kAnd:
      return kids("(and");
    case Kind::kOr:
      return kids("(or");
    case Kind::kUntil:
      return kids("(until " + num(f.a) + " " + num(f.b));
    case Kind::kAlways:
      return kids("(always " + num(f.a) + " " + num(f.b));
    case Kind::kEventually:
      return kids("(eventually " + num(f.a) + " " + num(f.b));
  }
  return {};
}

// ---------------------------------------------------------------- traces

SampledTrace::SampledTrace(double ts, std::vector<std::string> names, std::vector<std::vector<double>> channels)
    : ts_(ts), names_(std::move(names)), channels_(std::move(channels)) {
  if (!(ts > 0)) throw Error(ErrorCode::kDimensionMismatch, "trace sample time must be positive");
  if (names_.size() != channels_.size()) throw Error(ErrorCode::kDimensionMismatch, "channel names");
  size_ = channels_.empty() ? 0 : static_cast<Index>(channels_.front().size());
  for (const auto& c : channels_)
    if (static_cast<Index>(c.size()) != size_) throw Error(ErrorCode::kDimensionMismatch, "ragged channels");
}

SampledTrace SampledTrace::from_timestamps(const std::vector<double>& t, std::vector<std::string> names,
                                           std::vector<std::vector<double>> channels) {
  if (t.size() < 2) throw Error(ErrorCode::kDimensionMismatch, "need two timestamps to infer sampling");
  const double ts = t[1] - t[0];
  for (size_t k = 1; k < t.size(); ++k)
    if (std::abs((t[k] - t[k - 1]) - ts) > 1e-12)
      throw Error(ErrorCode::kDimensionMismatch, "non-uniform sampling", static_cast<int>(k));
  return SampledTrace(ts, std::move(names), std::move(channels));
}

Index SampledTrace::channel(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(ErrorCode::kConfig, "unknown trace channel '" + name + "'");
  return it - names_.begin();
}

// ---------------------------------------------------------------- semantics

std::pair<Index, Index> interval_steps(double a, double b, double ts) {
  const Index lo = static_cast<Index>(std::floor(a / ts + 1e-9));
  const Index hi = std::isinf(b) ? -1 : static_cast<Index>(std::ceil(b / ts - 1e-9));
  return {lo, hi};
}

namespace {

Tri tri_not(Tri v) { return v == Tri::kUnknown ? v : (v == Tri::kTrue ? Tri::kFalse : Tri::kTrue); }

Tri tri_and(Tri x, Tri y) {
  if (x == Tri::kFalse || y == Tri::kFalse) return Tri::kFalse;
  if (x == Tri::kUnknown || y == Tri::kUnknown) return Tri::kUnknown;
  return Tri::kTrue;
}

Tri tri_or(Tri x, Tri y) { return tri_not(tri_and(tri_not(x), tri_not(y))); }

bool compare(double v, Cmp c, double thr) {
  switch (c) {
    case Cmp::kGe:
      return v >= thr;
    case Cmp::kGt:
      return v > thr;
    case Cmp::kLe:
      return v <= thr;
    case Cmp::kLt:
      return v < thr;
  }
  return false;
}

// lhs U_[lo,hi] rhs at every sample. Samples past the end are unknown for
// a finite hi and absent for an unbounded one.
std::vector<Tri> until_series(const std::vector<Tri>& lhs, const std::vector<Tri>& rhs, Index lo, Index hi,
                              bool* clipped) {
  const Index n = static_cast<Index>(lhs.size());
  std::vector<Tri> out(static_cast<size_t>(n), Tri::kFalse);
  for (Index t = 0; t < n; ++t) {
    Tri acc = Tri::kFalse;
    Tri prefix = Tri::kTrue;  // lhs on [t, t']
    const Index last = hi < 0 ? n - 1 : t + hi;
    for (Index tp = t; tp <= last && acc != Tri::kTrue; ++tp) {
      if (tp >= n) {
        acc = tri_or(acc, Tri::kUnknown);
        break;
      }
      prefix = tri_and(prefix, lhs[static_cast<size_t>(tp)]);
      if (prefix == Tri::kFalse) break;
      if (tp >= t + lo) acc = tri_or(acc, tri_and(prefix, rhs[static_cast<size_t>(tp)]));
    }
    if (hi < 0 && clipped) *clipped = true;
    out[static_cast<size_t>(t)] = acc;
  }
  return out;
}

std::vector<Tri> series(const Formula& f, const SampledTrace& tr, bool* clipped) {
  const Index n = tr.size();
  const auto sz = static_cast<size_t>(n);
  switch (f.kind) {
    case Kind::kTrue:
      return std::vector<Tri>(sz, Tri::kTrue);
    case Kind::kPredicate: {
      const Index ch = tr.channel(f.signal);
      std::vector<Tri> out(sz);
      for (Index t = 0; t < n; ++t)
        out[static_cast<size_t>(t)] = compare(tr.value(ch, t), f.cmp, f.threshold) ? Tri::kTrue : Tri::kFalse;
      return out;
    }
    case Kind::kNot: {
      std::vector<Tri> out = series(*f.children.at(0), tr, clipped);
      for (auto& v : out) v = tri_not(v);
      return out;
    }
    case Kind::kAnd:
    case Kind::kOr: {
      std::vector<Tri> out(sz, f.kind == Kind::kAnd ? Tri::kTrue : Tri::kFalse);
      for (const auto& c : f.children) {
        const std::vector<Tri> s = series(*c, tr, clipped);
        for (size_t t = 0; t < sz; ++t) out[t] = f.kind == Kind::kAnd ? tri_and(out[t], s[t]) : tri_or(out[t], s[t]);
      }
      return out;
    }
    case Kind::kUntil:
    case Kind::kAlways:
    case Kind::kEventually: {
      const auto [lo, hi] = interval_steps(f.a, f.b, tr.ts());
      if (f.kind == Kind::kUntil)
        return until_series(series(*f.children.at(0), tr, clipped), series(*f.children.at(1), tr, clipped), lo, hi,
                            clipped);
      const std::vector<Tri> top(sz, Tri::kTrue);
      std::vector<Tri> inner = series(*f.children.at(0), tr, clipped);
      if (f.kind == Kind::kEventually) return until_series(top, inner, lo, hi, clipped);
      // always phi = not eventually not phi
      for (auto& v : inner) v = tri_not(v);
      std::vector<Tri> out = until_series(top, inner, lo, hi, clipped);
      for (auto& v : out) v = tri_not(v);
      return out;
    }
  }
  return {};
}

}  // namespace

std::vector<Tri> monitor(const Formula& f, const SampledTrace& trace, bool* clipped) {
  return series(f, trace, clipped);
}

Verdict check(const Formula& f, const SampledTrace& trace, Index t) {
  if (t < 0 || t >= trace.size()) throw Error(ErrorCode::kOutOfRange, "sample index outside the trace");
  Verdict v;
  v.value = series(f, trace, &v.clipped)[static_cast<size_t>(t)];
  return v;
}

bool evaluate(const Formula& f, const SampledTrace& trace, Index t) {
  const Verdict v = check(f, trace, t);
  if (v.value == Tri::kUnknown)
    throw Error(ErrorCode::kInsufficientHorizon, "trace too short for " + to_string(f), static_cast<int>(t));
  return v.value == Tri::kTrue;
}

bool entails(const Formula& f1, const Formula& f2, const std::vector<SampledTrace>& traces) {
  for (const auto& tr : traces) {
    const Tri a = check(f1, tr).value;
    const Tri b = check(f2, tr).value;
    if (a == Tri::kTrue && b == Tri::kFalse) return false;
  }
  return true;
}

}  // namespace netinv::stl

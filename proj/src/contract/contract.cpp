#include "netinv/contract.hpp"

#include "../core/parallel.hpp"
#include "netinv/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace netinv::contract {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd NodeModel::axes(const VectorXd& y) const {
  VectorXd yn(static_cast<Index>(neighbors.size()));
  for (size_t j = 0; j < neighbors.size(); ++j) yn(static_cast<Index>(j)) = y(neighbors[j]);
  if (axis_weights.size() == 0) return yn;
  return axis_weights * yn;
}

DisturbanceSpec NodeModel::environment(const VectorXd& axis_bounds) const {
  if (axis_bounds.size() != n_axes())
    throw Error(ErrorCode::kDimensionMismatch, "axis bound count", id);
  if ((axis_bounds.array() < 0).any()) throw Error(ErrorCode::kDimensionMismatch, "negative axis bound", id);
  DisturbanceSpec d;
  const Polytope coupling = Polytope::symmetric_box(axis_bounds);
  if (n_axes() == 0) d.measured = exo;
  else if (exo.rows() == 0) d.measured = coupling;
  else d.measured = product(coupling, exo);
  d.unmeasured = unmeasured;
  d.input = input;
  d.measurement_error = measurement_error;
  return d;
}

RciResult synthesize(const NodeModel& node, const VectorXd& axis_bounds, const VectorXd& floor) {
  RciOptions opt = node.rci;
  if (floor.size()) opt.floor = opt.floor.size() ? VectorXd(opt.floor.cwiseMax(floor)) : floor;
  return compute_mrci(node.sys, node.templ, node.q0, node.environment(axis_bounds), opt);
}

double eval_lambda(const NodeModel& node, const VectorXd& axis_bounds) {
  return output_bound(synthesize(node, axis_bounds).set, node.sys.c);
}

double combine_summable(const std::vector<double>& bounds) {
  double s = 0.0;
  for (double b : bounds) {
    if (b < 0) throw Error(ErrorCode::kDimensionMismatch, "negative summable bound");
    s += b;
  }
  return s;
}

VectorXd summable_weights(const MatrixXd& e1, double tol) {
  const Index k = e1.cols();
  VectorXd w = VectorXd::Zero(k);
  if (k == 0) return w;
  const VectorXd base = e1.col(0);
  const double nb = base.squaredNorm();
  if (nb == 0) throw Error(ErrorCode::kNotSummable, "zero coupling column", 0);
  for (Index j = 0; j < k; ++j) {
    const double b = e1.col(j).dot(base) / nb;
    if (!(b > 0) || (e1.col(j) - b * base).norm() > tol * std::max(1.0, e1.col(j).norm()))
      throw Error(ErrorCode::kNotSummable, "coupling columns are not positive multiples", static_cast<int>(j));
    w(j) = b;
  }
  return w;
}

// ---------------------------------------------------------------- samples

Index LambdaSamples::flat(const std::vector<Index>& idx) const {
  Index k = 0;
  for (size_t a = 0; a < axes.size(); ++a) k = k * static_cast<Index>(axes[a].size()) + idx[a];
  return k;
}

std::vector<Index> LambdaSamples::unflat(Index k) const {
  std::vector<Index> idx(axes.size());
  for (size_t a = axes.size(); a-- > 0;) {
    const auto len = static_cast<Index>(axes[a].size());
    idx[a] = k % len;
    k /= len;
  }
  return idx;
}

LambdaSamples sample_epigraph(const NodeModel& node, const VectorXd& axis_max, int points) {
  if (points < 2) throw Error(ErrorCode::kDimensionMismatch, "need at least two points per axis", node.id);
  if (axis_max.size() != node.n_axes()) throw Error(ErrorCode::kDimensionMismatch, "axis_max size", node.id);
  LambdaSamples s;
  s.node = node.id;
  Index total = 1;
  for (Index a = 0; a < axis_max.size(); ++a) {
    std::vector<double> g(static_cast<size_t>(points));
    for (int k = 0; k < points; ++k) g[static_cast<size_t>(k)] = axis_max(a) * k / (points - 1);
    s.axes.push_back(std::move(g));
    total *= points;
  }
  s.values.assign(static_cast<size_t>(total), std::numeric_limits<double>::infinity());
  s.finite.assign(static_cast<size_t>(total), 0);
  s.rcis.resize(static_cast<size_t>(total));

  // Row-major order visits every lower neighbour before the point itself.
  for (Index k = 0; k < total; ++k) {
    const std::vector<Index> idx = s.unflat(k);
    VectorXd bounds(static_cast<Index>(idx.size()));
    for (size_t a = 0; a < idx.size(); ++a) bounds(static_cast<Index>(a)) = s.axes[a][static_cast<size_t>(idx[a])];
    VectorXd floor;
    double below = 0.0;
    bool blocked = false;
    for (size_t a = 0; a < idx.size(); ++a) {
      if (idx[a] == 0) continue;
      std::vector<Index> lower = idx;
      --lower[a];
      const auto lk = static_cast<size_t>(s.flat(lower));
      if (!s.finite[lk]) {
        blocked = true;
        break;
      }
      floor = floor.size() ? VectorXd(floor.cwiseMax(s.rcis[lk].set.q)) : s.rcis[lk].set.q;
      below = std::max(below, s.values[lk]);
    }
    if (blocked) continue;
    // The warm start can pin a gain that no longer fits the input budget; a
    // cold start may still find a set. Values stay monotone either way since
    // an RCI for larger bounds also serves the smaller ones.
    std::vector<VectorXd> starts{floor};
    if (floor.size()) starts.emplace_back();
    for (const VectorXd& f : starts) {
      try {
        RciResult r = synthesize(node, bounds, f);
        if (!r.converged || (node.rci.certify && !r.certified)) continue;
        s.values[static_cast<size_t>(k)] = std::max(output_bound(r.set, node.sys.c), below);
        s.finite[static_cast<size_t>(k)] = 1;
        s.rcis[static_cast<size_t>(k)] = std::move(r);
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDiverged && e.code() != ErrorCode::kInfeasible) throw;
      }
    }
  }

  for (Index k = 0; k < total && s.monotone; ++k) {
    const std::vector<Index> idx = s.unflat(k);
    for (size_t a = 0; a < idx.size(); ++a) {
      if (idx[a] == 0) continue;
      std::vector<Index> lower = idx;
      --lower[a];
      const auto lk = static_cast<size_t>(s.flat(lower));
      if (s.finite[lk] && s.finite[static_cast<size_t>(k)] &&
          s.values[static_cast<size_t>(k)] < s.values[lk] - 1e-9)
        s.monotone = false;
    }
  }
  return s;
}

std::vector<LambdaSamples> sample_all(const std::vector<NodeModel>& nodes, const std::vector<VectorXd>& axis_max,
                                      int points, int jobs) {
  if (axis_max.size() != nodes.size()) throw Error(ErrorCode::kDimensionMismatch, "axis_max per node");
  std::vector<LambdaSamples> out(nodes.size());
  detail::parallel_for(static_cast<int>(nodes.size()), jobs, [&](int i) {
    out[static_cast<size_t>(i)] = sample_epigraph(nodes[static_cast<size_t>(i)], axis_max[static_cast<size_t>(i)], points);
  });
  return out;
}

Index ceiling_index(const LambdaSamples& s, const VectorXd& query) {
  if (query.size() != static_cast<Index>(s.axes.size()))
    throw Error(ErrorCode::kDimensionMismatch, "query dimension", s.node);
  std::vector<Index> idx(s.axes.size());
  for (size_t a = 0; a < s.axes.size(); ++a) {
    const auto& g = s.axes[a];
    const double v = query(static_cast<Index>(a));
    // tolerate round-off right above a grid value
    const auto it = std::lower_bound(g.begin(), g.end(), v - 1e-12 * (1.0 + std::abs(v)));
    if (it == g.end()) throw Error(ErrorCode::kOutOfRange, "query above the sampled domain", s.node);
    idx[a] = it - g.begin();
  }
  return s.flat(idx);
}

double lambda_inner(const LambdaSamples& s, const VectorXd& query) {
  const auto k = static_cast<size_t>(ceiling_index(s, query));
  if (!s.finite[k]) throw Error(ErrorCode::kNoGuarantee, "no finite guarantee at the ceiling grid point", s.node);
  return s.values[k];
}

LambdaMap sampled_map(const std::vector<NodeModel>& nodes, const std::vector<LambdaSamples>& samples) {
  return [&nodes, &samples](const VectorXd& y) {
    VectorXd out(static_cast<Index>(nodes.size()));
    for (size_t i = 0; i < nodes.size(); ++i) {
      try {
        out(static_cast<Index>(i)) = lambda_inner(samples[i], nodes[i].axes(y));
      } catch (const Error& e) {
        throw Error(e.code(), "node " + std::to_string(nodes[i].id), static_cast<int>(i));
      }
    }
    return out;
  };
}

LambdaMap exact_map(const std::vector<NodeModel>& nodes) {
  return [&nodes](const VectorXd& y) {
    VectorXd out(static_cast<Index>(nodes.size()));
    for (size_t i = 0; i < nodes.size(); ++i) {
      try {
        out(static_cast<Index>(i)) = eval_lambda(nodes[i], nodes[i].axes(y));
      } catch (const Error& e) {
        throw Error(e.code(), "node " + std::to_string(nodes[i].id), static_cast<int>(i));
      }
    }
    return out;
  };
}

bool check_validity(const LambdaMap& lambda, const VectorXd& y, double tol) {
  return ((lambda(y) - y).array() <= tol).all();
}

namespace {

std::string vec_str(const VectorXd& v) {
  std::ostringstream os;
  os.precision(6);
  os << v.transpose();
  return os.str();
}

}  // namespace

ContractState search_contract(const LambdaMap& lambda, Index n_nodes, int max_iter) {
  ContractState st;
  VectorXd y = VectorXd::Zero(n_nodes);
  for (int k = 0; k <= max_iter; ++k) {
    VectorXd next;
    try {
      next = lambda(y);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kOutOfRange && e.code() != ErrorCode::kNoGuarantee) throw;
      throw Error(ErrorCode::kNoValidContract,
                  "iterate left the sampled domain at node index " + std::to_string(e.index()) + ", last iterate [" +
                      vec_str(y) + "]",
                  e.index());
    }
    st.iterates.push_back(next);
    if (k > 0 && ((next - y).array() <= 1e-9).all()) {
      st.y_max = y;
      return st;
    }
    y = next;
  }
  Index worst;
  (st.iterates.back() - st.iterates[st.iterates.size() - 2]).maxCoeff(&worst);
  throw Error(ErrorCode::kNoValidContract,
              "no fixed point within " + std::to_string(max_iter) + " iterations, last iterate [" + vec_str(y) + "]",
              static_cast<int>(worst));
}

VectorXd ceiling_point(const LambdaSamples& s, const VectorXd& query) {
  const std::vector<Index> idx = s.unflat(ceiling_index(s, query));
  VectorXd out(static_cast<Index>(idx.size()));
  for (size_t a = 0; a < idx.size(); ++a) out(static_cast<Index>(a)) = s.axes[a][static_cast<size_t>(idx[a])];
  return out;
}

std::vector<RciResult> deploy(const std::vector<NodeModel>& nodes, const std::vector<LambdaSamples>& samples,
                              const VectorXd& y) {
  std::vector<RciResult> out;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const auto k = static_cast<size_t>(ceiling_index(samples[i], nodes[i].axes(y)));
    if (!samples[i].finite[k]) throw Error(ErrorCode::kNoGuarantee, "divergent grid point", static_cast<int>(i));
    out.push_back(samples[i].rcis[k]);
  }
  return out;
}

std::vector<VectorXd> iterate_contract(const StlContract& c, const VectorXd& p_af0, int steps) {
  std::vector<VectorXd> out;
  VectorXd p_af = p_af0;
  for (int k = 0; k < steps; ++k) {
    out.push_back(c.lambda_hat(p_af));
    p_af = c.gamma ? c.gamma(out.back()) : out.back();
  }
  return out;
}

StlContract bound_contract(const std::vector<std::string>& outputs, LambdaMap lambda, stl::FormulaPtr assume_env) {
  auto bounds = [outputs](const VectorXd& p) {
    std::vector<stl::FormulaPtr> parts;
    for (size_t i = 0; i < outputs.size(); ++i)
      parts.push_back(stl::always(0, stl::kUnbounded, stl::abs_le(outputs[i], p(static_cast<Index>(i)))));
    return stl::conj(std::move(parts));
  };
  StlContract c;
  c.assume_feedback = bounds;
  c.guarantee = bounds;
  c.assume_env = std::move(assume_env);
  c.lambda_hat = std::move(lambda);
  c.gamma = [](const VectorXd& p) { return p; };
  return c;
}

std::pair<double, double> small_gain_bounds(double mu1, double mu2, double nu1, double nu2, double d1, double d2) {
  for (double v : {mu1, mu2, nu1, nu2, d1, d2})
    if (v < 0) throw Error(ErrorCode::kDimensionMismatch, "small-gain parameters must be nonnegative");
  const double loop = nu1 * nu2;
  if (loop >= 1.0) throw Error(ErrorCode::kSmallGainViolated, "nu1 * nu2 >= 1");
  const double den = 1.0 - loop;
  return {mu1 / den * d1 + mu2 * nu1 / den * d2, mu1 * nu2 / den * d1 + mu2 / den * d2};
}

}  // namespace netinv::contract

// netinv: batch front end for RCI, contract, simulation and contingency runs.

#include "netinv/config.hpp"
#include "netinv/error.hpp"
#include "netinv/scenario.hpp"
#include "netinv/tube_mpc.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace netinv;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

enum Exit { kOk = 0, kUsage = 1, kModel = 2, kViolation = 3, kSynthesis = 4 };

struct Args {
  std::string config;
  std::string out = ".";
  std::optional<unsigned> seed;
  int jobs = 1;
};

std::ofstream open_out(const Args& a, const std::string& name) {
  std::ofstream f(fs::path(a.out) / name);
  if (!f) throw Error(ErrorCode::kConfig, "cannot write " + (fs::path(a.out) / name).string());
  f << std::setprecision(12);
  return f;
}

io::ScenarioConfig load(const Args& a) {
  io::ScenarioConfig cfg = io::load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  fs::create_directories(a.out);
  return cfg;
}

std::string node_label(const contract::NodeModel& n) { return std::to_string(n.id); }

void write_rci(const Args& a, const std::string& id, const RciResult& r) {
  std::ofstream f = open_out(a, "rci_" + id + ".txt");
  io::write_polytope(f, r.set);
  f << "k_ff " << r.k_ff.rows() << ' ' << r.k_ff.cols() << '\n';
  for (Index i = 0; i < r.k_ff.size(); ++i) f << r.k_ff.reshaped<Eigen::RowMajor>()(i) << '\n';
  f << "k_fb " << r.k_fb.rows() << ' ' << r.k_fb.cols() << '\n';
  for (Index i = 0; i < r.k_fb.size(); ++i) f << r.k_fb.reshaped<Eigen::RowMajor>()(i) << '\n';
}

void write_summary_row(std::ostream& os, const std::string& id, const RciResult& r) {
  os << id << ',' << r.set.rows() << ',' << r.iterations << ',' << r.converged << ',' << r.certified << ','
     << r.set.q.maxCoeff() << '\n';
}

void write_samples(const Args& a, const contract::NodeModel& node, const contract::LambdaSamples& s) {
  std::ofstream f = open_out(a, "epigraph_" + node_label(node) + ".csv");
  for (size_t ax = 0; ax < s.axes.size(); ++ax) f << "axis" << ax << ',';
  f << "lambda,finite\n";
  for (Index k = 0; k < s.size(); ++k) {
    const auto idx = s.unflat(k);
    for (size_t ax = 0; ax < idx.size(); ++ax) f << s.axes[ax][static_cast<size_t>(idx[ax])] << ',';
    f << s.values[static_cast<size_t>(k)] << ',' << static_cast<int>(s.finite[static_cast<size_t>(k)]) << '\n';
  }
}

void write_contract(const Args& a, const contract::ContractState& st) {
  std::ofstream f = open_out(a, "contract.txt");
  f << "y_max";
  for (Index i = 0; i < st.y_max.size(); ++i) f << ' ' << st.y_max(i);
  f << "\niterations " << st.iterates.size() << '\n';
  for (const VectorXd& y : st.iterates) {
    for (Index i = 0; i < y.size(); ++i) f << (i ? " " : "") << y(i);
    f << '\n';
  }
}

int cmd_rci(const Args& a) {
  const io::ScenarioConfig cfg = load(a);
  std::ofstream summary = open_out(a, "rci_summary.csv");
  summary << "node,rows,iterations,converged,certified,max_q\n";
  auto run = [&](const contract::NodeModel& node, const VectorXd& bounds) {
    try {
      const RciResult r = contract::synthesize(node, bounds);
      write_rci(a, node_label(node), r);
      write_summary_row(summary, node_label(node), r);
    } catch (const Error& e) {
      throw Error(e.code(), "node " + node_label(node) + ": " + e.what(), node.id);
    }
  };
  if (cfg.kind == io::ConfigKind::kAbstract) {
    for (size_t i = 0; i < cfg.nodes.size(); ++i) run(cfg.nodes[i], cfg.node_axis_max[i]);
    return kOk;
  }
  // Grid nodes are only feasible for the coupling bounds a contract certifies.
  const scenario::GridContract gc = scenario::synthesize(cfg.net, cfg.synth, cfg.axis_max, cfg.points, a.jobs);
  for (size_t i = 0; i < gc.nodes.size(); ++i) {
    write_rci(a, node_label(gc.nodes[i]), gc.rcis[i]);
    write_summary_row(summary, node_label(gc.nodes[i]), gc.rcis[i]);
  }
  return kOk;
}

scenario::GridContract grid_contract(const Args& a, const io::ScenarioConfig& cfg) {
  return scenario::synthesize(cfg.net, cfg.synth, cfg.axis_max, cfg.points, a.jobs);
}

int cmd_contract(const Args& a) {
  const io::ScenarioConfig cfg = load(a);
  if (cfg.kind == io::ConfigKind::kAbstract) {
    const auto samples = contract::sample_all(cfg.nodes, cfg.node_axis_max, cfg.points, a.jobs);
    for (size_t i = 0; i < cfg.nodes.size(); ++i) write_samples(a, cfg.nodes[i], samples[i]);
    contract::ContractState st = contract::search_contract(contract::sampled_map(cfg.nodes, samples),
                                                           static_cast<Index>(cfg.nodes.size()));
    st.rcis = contract::deploy(cfg.nodes, samples, st.y_max);
    write_contract(a, st);
    for (size_t i = 0; i < cfg.nodes.size(); ++i) write_rci(a, node_label(cfg.nodes[i]), st.rcis[i]);
    std::cout << "y_max " << st.y_max.transpose() << " after " << st.iterates.size() - 1 << " iterations\n";
    return kOk;
  }
  const scenario::GridContract gc = grid_contract(a, cfg);
  for (size_t i = 0; i < gc.nodes.size(); ++i) {
    write_samples(a, gc.nodes[i], gc.samples[i]);
    write_rci(a, node_label(gc.nodes[i]), gc.rcis[i]);
  }
  write_contract(a, gc.state);
  std::cout << "y_max " << gc.state.y_max.transpose() << "\n";
  if (!gc.apriori_ok) std::cerr << "warning: contract bounds exceed the a priori angle bounds\n";
  return kOk;
}

// Returns the exit code for the verdicts (3 when `enforce` and any fails).
int report(const Args& a, const std::vector<scenario::GuaranteeVerdict>& verdicts, bool enforce,
           std::ostream& extra_text = std::cout) {
  std::ofstream f = open_out(a, "verdicts.txt");
  bool ok = true;
  for (const auto& v : verdicts) {
    std::ostringstream line;
    line << v.name << ' ' << (v.holds ? "true" : "false");
    if (!v.holds) line << " first_violation_t=" << v.first_violation;
    line << "  " << v.formula;
    f << line.str() << '\n';
    extra_text << line.str() << '\n';
    ok = ok && v.holds;
  }
  return ok || !enforce ? kOk : kViolation;
}

int run_simulation(const Args& a, const io::ScenarioConfig& cfg) {
  const scenario::GridContract gc = grid_contract(a, cfg);
  scenario::SupervisionStats stats;
  const grid::Controller ctrl = scenario::supervised_controller(cfg.net, gc, cfg.legacy, cfg.supervise, &stats);
  const grid::Trace tr = grid::simulate(cfg.net, grid::equilibrium_state(cfg.net, cfg.net.theta0), ctrl,
                                        io::make_disturbance(cfg), cfg.contingencies, cfg.sim);
  std::ofstream csv = open_out(a, "trace.csv");
  tr.write_csv(csv);
  std::cout << "samples " << tr.samples() << " interventions " << stats.interventions << " breaches "
            << stats.breaches << '\n';
  return report(a, scenario::check_guarantees(cfg.net, tr, gc.state.y_max), cfg.supervise);
}

int cmd_simulate(const Args& a) {
  const io::ScenarioConfig cfg = load(a);
  if (cfg.kind != io::ConfigKind::kGrid) throw Error(ErrorCode::kConfig, "simulate needs a grid config");
  return run_simulation(a, cfg);
}

int cmd_mpc(const Args& a) {
  const io::ScenarioConfig cfg = load(a);
  if (cfg.kind != io::ConfigKind::kGrid) throw Error(ErrorCode::kConfig, "mpc needs a grid config");
  if (cfg.contingencies.empty()) return run_simulation(a, cfg);
  if (cfg.contingencies.size() > 1)
    std::cerr << "warning: planning for the first contingency only; later events are applied unplanned\n";

  const grid::ContingencyEvent& ev = cfg.contingencies.front();
  {
    grid::GridNetwork after = cfg.net;
    grid::apply_event(after, ev);
    const grid::GridNetwork post = grid::reduced(after);
    const auto islands = post.islands();
    if (islands.size() > 1) {
      std::cerr << "note: post-event network splits into " << islands.size() << " islands:";
      for (const auto& isl : islands) {
        std::cerr << " {";
        for (size_t k = 0; k < isl.size(); ++k) std::cerr << (k ? " " : "") << post.buses[static_cast<size_t>(isl[k])].id;
        std::cerr << '}';
      }
      std::cerr << ", target and balance set per island\n";
    }
    const mpc::DelayStructure d = mpc::delay_structure(post, cfg.mpc.source_bus, cfg.mpc.edges_per_step, cfg.mpc.horizon);
    if (!d.unreachable.empty()) {
      std::cerr << "warning: buses unreachable from source " << cfg.mpc.source_bus << ":";
      for (int id : d.unreachable) std::cerr << ' ' << id;
      std::cerr << " (never act during the horizon)\n";
    }
  }
  const mpc::ContingencyPlan cp = mpc::prepare_contingency(cfg.net, ev, cfg.mpc);
  {
    std::ofstream f = open_out(a, "reference.csv");
    io::write_reference(f, cp);
  }

  const scenario::GridContract gc = grid_contract(a, cfg);
  const grid::Controller before = scenario::supervised_controller(cfg.net, gc, cfg.legacy, cfg.supervise, nullptr);
  mpc::TrackingStats stats;
  const grid::Controller ctrl = mpc::contingency_controller(cp, before, cfg.legacy, &stats);
  const grid::Trace tr = grid::simulate(cfg.net, grid::equilibrium_state(cfg.net, cfg.net.theta0), ctrl,
                                        io::make_disturbance(cfg), cfg.contingencies, cfg.sim);
  {
    std::ofstream f = open_out(a, "trace.csv");
    tr.write_csv(f);
  }
  const auto viol = mpc::tube_violation(cp, tr);
  const auto dist = mpc::target_distance(cp, tr);
  {
    std::ofstream f = open_out(a, "tube.csv");
    f << "t,tube_violation,target_distance\n";
    for (size_t k = 0; k < tr.t.size(); ++k) f << tr.t[k] << ',' << viol[k] << ',' << dist[k] << '\n';
  }

  scenario::GuaranteeVerdict tube{"error_in_tube", "max(P e - q) <= 1e-6 after the grace window", true, -1.0};
  scenario::GuaranteeVerdict settle{"settled", "", true, -1.0};
  const double settle_time = ev.time + cp.ref.horizon * cp.ts + cfg.settle_after;
  {
    std::ostringstream s;
    s << "|x - x*| <= " << cfg.settle_tol << " for t >= " << settle_time;
    settle.formula = s.str();
  }
  for (size_t k = 0; k < tr.t.size(); ++k) {
    const int step = static_cast<int>(k) - cp.event_step;
    if (step >= cfg.grace_steps && viol[k] > 1e-6 && tube.holds) {
      tube.holds = false;
      tube.first_violation = tr.t[k];
    }
    if (tr.t[k] >= settle_time - 1e-9 && dist[k] > cfg.settle_tol && settle.holds) {
      settle.holds = false;
      settle.first_violation = tr.t[k];
    }
  }
  if (tr.t.back() < settle_time - 1e-9) {
    settle.holds = false;
    settle.formula += " (trace ends before the settling time)";
  }
  std::cout << "u_ss " << cp.u_ss.transpose() << "\nomega_fb " << cp.omega_fb << " omega_ff " << cp.omega_ff
            << " plan cost " << cp.ref.cost << " kkt " << cp.ref.kkt_residual << "\nbreaches " << stats.breaches
            << " interventions " << stats.interventions << '\n';
  return report(a, {tube, settle}, true);
}

int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kNoValidContract:
    case ErrorCode::kDiverged:
    case ErrorCode::kInfeasible:
    case ErrorCode::kNoGuarantee:
    case ErrorCode::kPlanInfeasible:
    case ErrorCode::kSmallGainViolated:
      return kSynthesis;
    case ErrorCode::kSupervisionInfeasible:
      return kViolation;
    default:
      return kModel;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional safety synthesis for networked swing-equation grids"};
  app.require_subcommand(1);
  Args args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "scenario JSON")->required();
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--seed", args.seed, "random seed (overrides the config)");
    sub->add_option("--jobs", args.jobs, "parallel node synthesis")->check(CLI::PositiveNumber);
  };
  int (*cmd)(const Args&) = nullptr;
  auto add = [&](const char* name, const char* help, int (*fn)(const Args&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    sub->callback([&cmd, fn] { cmd = fn; });
  };
  add("rci", "per-node RCIs (abstract: at axis_max, grid: at the contract bounds)", cmd_rci);
  add("contract", "epigraph sampling and contract search", cmd_contract);
  add("simulate", "supervised nonlinear simulation with STL verdicts", cmd_simulate);
  add("mpc", "contingency tube MPC run", cmd_mpc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    return cmd(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kModel;
  }
}

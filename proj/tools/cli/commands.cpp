#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "gridledger/energy_model.hpp"
#include "gridledger/scenario.hpp"
#include "gridledger/tem/distributed.hpp"
#include "gridledger/tem/outcome_io.hpp"
#include "gridledger/tem/problem.hpp"

namespace gridledger::cli {

namespace fs = std::filesystem;

namespace {

struct ScenarioArgs {
  std::string config;
  std::string synthetic;
  std::uint64_t seed = 0;
};

struct RunArgs {
  ScenarioArgs input;
  std::string mode = "TEM";
  bool distributed = false;
  std::string transport = "inprocess";
  std::string rho = "1";
  double eps = 1e-6;
  int max_iter = 1000;
  int validators = 4;
  std::string out = "out";
};

struct CompareArgs {
  ScenarioArgs input;
  bool distributed = false;
  std::string out = "out";
};

struct ChainArgs {
  int validators = 4;
  std::string faults;
  std::string mode = "modified";
  std::uint64_t blocks = 10;
  std::uint64_t seed = 0;
  std::string latency = "uniform:1,10";
  std::string out;
  std::string trace;
};

struct LayoutArgs {
  std::string mode = "TEM";
  int users = 2;
  int horizon = 4;
};

struct QpDumpArgs {
  ScenarioArgs input;
  std::string mode = "TEM";
  std::string out;
};

struct SynthArgs {
  std::string synthetic = "5,24";
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string stem = "scenario";
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Mode mode_arg(const std::string& text) {
  auto m = parse_mode(text);
  if (!m) throw UsageError("unknown mode '" + text + "' (expected TEM, BS1, BS2 or BS3)");
  return *m;
}

void add_scenario_options(CLI::App* cmd, ScenarioArgs& a) {
  auto* cfg = cmd->add_option("config,--config", a.config, "Scenario JSON config");
  auto* syn = cmd->add_option("--synthetic", a.synthetic, "Generate a synthetic scenario with N users and T slots")
                  ->type_name("N,T");
  cfg->excludes(syn);
  cmd->add_option("--seed", a.seed, "Synthetic generator seed (GRIDLEDGER_SEED overrides)");
}

scenario::Scenario load_input(const ScenarioArgs& a) {
  if (!a.config.empty()) return scenario::load_scenario(a.config);
  if (a.synthetic.empty()) throw UsageError("a config path or --synthetic N,T is required");
  const auto [n, t] = parse_synthetic(a.synthetic);
  return scenario::generate_synthetic(effective_seed(a.seed), n, t);
}

tem::RhoSchedule rho_arg(const std::string& text) {
  if (text == "reciprocal") return tem::RhoSchedule::reciprocal();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !(v > 0.0) || !std::isfinite(v))
    throw UsageError("--rho must be a positive number or 'reciprocal'");
  return tem::RhoSchedule::fixed(v);
}

netsim::LatencyModel latency_arg(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (kind == "fixed") return netsim::LatencyModel::fixed(std::stod(rest));
    if (kind == "uniform") {
      const auto comma = rest.find(',');
      if (comma == std::string::npos) throw UsageError("");
      return netsim::LatencyModel::uniform(std::stod(rest.substr(0, comma)), std::stod(rest.substr(comma + 1)));
    }
  } catch (const std::logic_error&) {
  }
  throw UsageError("--latency must be fixed:<ms> or uniform:<lo>,<hi>");
}

std::int64_t parse_time_us(const std::string& text) {
  std::string digits = text;
  double scale = 1000.0;
  auto strip = [&](std::string_view suffix, double s) {
    if (digits.size() > suffix.size() && digits.ends_with(suffix)) {
      digits.resize(digits.size() - suffix.size());
      scale = s;
      return true;
    }
    return false;
  };
  strip("us", 1.0) || strip("ms", 1000.0) || strip("s", 1e6);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || v < 0.0 || !std::isfinite(v))
    throw std::invalid_argument("bad time '" + text + "'");
  return std::llround(v * scale);
}

chain::NodeId parse_node(const std::string& text) {
  std::string_view s = text;
  if (s.starts_with("validator")) s.remove_prefix(9);
  chain::NodeId id = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("bad node '" + text + "'");
  return id;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

std::string savings_text(double bs1, double cost) {
  if (!(bs1 > 0.0)) return "nan";
  std::ostringstream os;
  os << std::setprecision(6) << (bs1 - cost) / bs1;
  return os.str();
}

void print_outcome(std::ostream& out, const tem::Outcome& o, std::optional<double> bs1_cost) {
  out << std::setprecision(10);
  out << "mode: " << to_string(o.mode) << '\n';
  out << "status: " << to_string(o.status) << '\n';
  out << "total_cost: " << o.total_cost() << '\n';
  if (bs1_cost) out << "savings_vs_BS1: " << savings_text(*bs1_cost, o.total_cost()) << '\n';
  out << "iterations: " << o.iterations << '\n';
  out << "converged: " << (o.status != tem::OutcomeStatus::MaxIter ? "true" : "false") << '\n';
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  const Mode mode = mode_arg(a.mode);
  if (a.transport != "inprocess" && a.transport != "chain") throw UsageError("--transport must be inprocess or chain");
  if (a.distributed && mode != Mode::Tem) throw UsageError("--distributed applies to --mode TEM only");
  if (a.transport == "chain" && !a.distributed) throw UsageError("--transport chain requires --distributed");
  if (a.validators < 4) throw UsageError("--validators must be at least 4");
  const scenario::Scenario s = load_input(a.input);

  tem::AdmmParams params;
  params.eps = a.eps;
  params.max_iter = a.max_iter;
  params.rho = rho_arg(a.rho);
  try {
    tem::validate(params);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  tem::Outcome outcome;
  if (!a.distributed) {
    outcome = tem::solve_centralized(s, mode);
  } else if (a.transport == "inprocess") {
    outcome = tem::run_distributed(s, params);
  } else {
    tem::ChainOptions opts;
    opts.validators = a.validators;
    opts.net.seed = effective_seed(a.input.seed);
    tem::ChainRun run = tem::run_distributed_chain(s, params, opts);
    out << "chain_blocks: " << run.blocks << '\n';
    out << "chain_time_us: " << run.finish_time_us << '\n';
    out << "digests_match: " << (run.digests_match ? "true" : "false") << '\n';
    out << "replicas_agree: " << (run.replicas_agree ? "true" : "false") << '\n';
    out << "privacy_audit: " << (run.audit.clean() ? "clean" : "LEAK") << " (" << run.audit.transactions_scanned
        << " transactions)\n";
    outcome = std::move(run.outcome);
  }
  const double bs1 = mode == Mode::Bs1 ? outcome.total_cost() : tem::solve_centralized(s, Mode::Bs1).total_cost();
  print_outcome(out, outcome, bs1);

  const std::string stem = "run_" + std::string(to_string(mode)) + (a.distributed ? "_" + a.transport : "");
  for (const auto& p : tem::write_outcome(outcome, a.out, stem)) out << "wrote: " << p.string() << '\n';

  if (outcome.status == tem::OutcomeStatus::MaxIter) {
    err << "error: ADMM stopped at the iteration limit (" << outcome.iterations << ") without converging\n";
    return kInfeasible;
  }
  return kOk;
}

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  const scenario::Scenario s = load_input(a.input);
  std::map<Mode, tem::Outcome> results;
  for (Mode m : kAllModes) {
    if (m == Mode::Tem && a.distributed)
      results[m] = tem::run_distributed(s, tem::AdmmParams{});
    else
      results[m] = tem::solve_centralized(s, m);
  }
  auto cost = [&](Mode m) { return results.at(m).total_cost(); };
  const double bs1 = cost(Mode::Bs1);

  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "#schema=" << kCompareSchema << '\n';
  csv << "mode,total_cost,savings_vs_BS1,iterations\n";
  for (Mode m : kAllModes)
    csv << to_string(m) << ',' << cost(m) << ',' << savings_text(bs1, cost(m)) << ',' << results.at(m).iterations
        << '\n';
  out << csv.str();

  constexpr double kTieTol = 1e-6;
  const bool ordered = cost(Mode::Tem) <= cost(Mode::Bs2) + kTieTol && cost(Mode::Bs2) <= bs1 + kTieTol &&
                       cost(Mode::Tem) <= cost(Mode::Bs3) + kTieTol && cost(Mode::Bs3) <= bs1 + kTieTol;
  out << "ordering TEM <= BS2 <= BS1 and TEM <= BS3 <= BS1: " << (ordered ? "holds" : "VIOLATED") << '\n';
  out << "reference only, not asserted (field data): BS2 about 16%, BS3 about 11%, TEM 25% below BS1\n";
  if (!ordered) err << "warning: mode ordering violated\n";

  fs::create_directories(a.out);
  const fs::path path = fs::path(a.out) / "compare.csv";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << csv.str();
  out << "wrote: " << path.string() << '\n';
  return kOk;
}

struct ChainResult {
  chain::ProtocolMode mode;
  netsim::Metrics metrics;
  std::map<std::uint64_t, double> latency;  // mean commit latency per height
  std::uint64_t height = 0;
};

ChainResult simulate_chain(const ChainArgs& a, chain::ProtocolMode mode,
                           const std::vector<std::pair<chain::NodeId, netsim::Fault>>& faults, std::ostream& out) {
  auto cfg = std::make_shared<chain::ConsensusConfig>();
  for (int v = 0; v < a.validators; ++v) cfg->validators.push_back(chain::NodeId(v));
  cfg->mode = mode;

  netsim::NetConfig net;
  net.latency = latency_arg(a.latency);
  net.seed = effective_seed(a.seed);
  net.event_budget = 5'000'000;
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  netsim::Simulator sim(net);
  for (auto id : cfg->validators) sim.add(std::make_unique<netsim::ChainProcess>(id, chain::Role::Validator, cfg));
  for (const auto& [node, fault] : faults) {
    try {
      sim.inject_fault(node, fault);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  sim.run_until(netsim::StopCondition::at_height(a.blocks));

  ChainResult r{mode, netsim::metrics(sim.trace()), {}, sim.min_validator_height()};
  std::map<std::uint64_t, std::pair<double, int>> lat;
  for (const auto& e : sim.trace().events)
    if (e.event == netsim::EventKind::Commit) {
      lat[e.height].first += double(e.latency_us);
      lat[e.height].second += 1;
    }
  for (const auto& [h, p] : lat) r.latency[h] = p.first / p.second;

  if (!a.trace.empty()) {
    std::string path = a.trace;
    if (a.mode == "both") path += "." + std::string(chain::to_string(mode));
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    netsim::write_trace_csv(sim.trace(), f);
    out << "wrote: " << path << '\n';
  }
  return r;
}

int cmd_chain(const ChainArgs& a, std::ostream& out, std::ostream& err) {
  if (a.validators < 4) throw UsageError("--validators must be at least 4 to tolerate one fault (n >= 3f+1)");
  if (a.blocks < 1) throw UsageError("--blocks must be at least 1");
  std::vector<chain::ProtocolMode> modes;
  if (a.mode == "modified" || a.mode == "both") modes.push_back(chain::ProtocolMode::Modified);
  if (a.mode == "classic" || a.mode == "both") modes.push_back(chain::ProtocolMode::Classic);
  if (modes.empty()) throw UsageError("--mode must be modified, classic or both");
  std::vector<std::pair<chain::NodeId, netsim::Fault>> faults;
  try {
    faults = parse_faults(a.faults);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--faults: ") + e.what());
  }

  std::vector<ChainResult> results;
  for (auto mode : modes) {
    try {
      results.push_back(simulate_chain(a, mode, faults, out));
    } catch (const netsim::LivenessTimeout& e) {
      err << "error: liveness timeout in " << chain::to_string(mode) << " mode: " << e.what()
          << " (last committed height " << e.min_height() << " on every live validator, " << e.max_height()
          << " at best)\n";
      return kLiveness;
    }
  }

  std::ostringstream csv;
  csv << std::setprecision(10);
  csv << "#schema=" << kChainSchema << '\n';
  csv << "mode,validators,height,consensus_messages,bytes,commit_latency_us\n";
  for (const auto& r : results)
    for (std::uint64_t h = 0; h < a.blocks; ++h) {
      auto msgs = r.metrics.consensus_by_height.find(h);
      auto bytes = r.metrics.bytes_by_height.find(h);
      auto lat = r.latency.find(h);
      csv << chain::to_string(r.mode) << ',' << a.validators << ',' << h << ','
          << (msgs == r.metrics.consensus_by_height.end() ? 0 : msgs->second) << ','
          << (bytes == r.metrics.bytes_by_height.end() ? 0 : bytes->second) << ','
          << (lat == r.latency.end() ? 0.0 : lat->second) << '\n';
    }
  out << csv.str();

  std::map<chain::ProtocolMode, double> per_block;
  for (const auto& r : results) {
    std::uint64_t total = 0;
    for (std::uint64_t h = 0; h < a.blocks; ++h)
      if (auto it = r.metrics.consensus_by_height.find(h); it != r.metrics.consensus_by_height.end())
        total += it->second;
    per_block[r.mode] = double(total) / double(a.blocks);
    out << chain::to_string(r.mode) << ": committed " << r.height << " blocks, " << per_block[r.mode]
        << " consensus messages per block, mean commit latency " << r.metrics.mean_commit_latency_us << " us\n";
  }
  if (per_block.size() == 2)
    out << "modified/classic message ratio: "
        << per_block[chain::ProtocolMode::Modified] / per_block[chain::ProtocolMode::Classic] << '\n';

  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot write " + a.out);
    f << csv.str();
    out << "wrote: " << a.out << '\n';
  }
  return kOk;
}

int cmd_layout(const LayoutArgs& a, std::ostream& out) {
  if (a.users < 1 || a.horizon < 1) throw UsageError("--users and --horizon must be positive");
  out << energy::describe_layout(energy::UserLayout(mode_arg(a.mode), a.horizon, a.users));
  return kOk;
}

int cmd_qp_dump(const QpDumpArgs& a, std::ostream& out) {
  const Mode mode = mode_arg(a.mode);
  const scenario::Scenario s = load_input(a.input);
  const qp::QpProblem p = tem::assemble_problem(s, mode);
  if (a.out.empty()) {
    qp::dump_csv(p, out);
  } else {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot write " + a.out);
    qp::dump_csv(p, f);
    out << "wrote: " << a.out << '\n';
  }
  return kOk;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto [n, t] = parse_synthetic(a.synthetic);
  const scenario::Scenario s = scenario::generate_synthetic(effective_seed(a.seed), n, t);
  out << "wrote: " << scenario::write_scenario(s, a.out, a.stem).string() << '\n';
  return kOk;
}

}  // namespace

std::pair<int, int> parse_synthetic(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("--synthetic expects N,T");
  int n = 0, t = 0;
  const std::string a = text.substr(0, comma), b = text.substr(comma + 1);
  auto ra = std::from_chars(a.data(), a.data() + a.size(), n);
  auto rb = std::from_chars(b.data(), b.data() + b.size(), t);
  if (ra.ec != std::errc() || ra.ptr != a.data() + a.size() || rb.ec != std::errc() || rb.ptr != b.data() + b.size() ||
      n < 1 || t < 1)
    throw UsageError("--synthetic expects two positive integers N,T");
  return {n, t};
}

std::uint64_t effective_seed(std::uint64_t fallback) {
  const char* env = std::getenv("GRIDLEDGER_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  std::uint64_t v = 0;
  const std::string_view s(env);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("GRIDLEDGER_SEED must be an unsigned integer");
  return v;
}

std::vector<std::pair<chain::NodeId, netsim::Fault>> parse_faults(const std::string& text) {
  std::vector<std::pair<chain::NodeId, netsim::Fault>> faults;
  for (const auto& item : split(text, ',')) {
    const auto at = item.find('@');
    const auto colon = item.find(':', at == std::string::npos ? 0 : at);
    if (at == std::string::npos || colon == std::string::npos) throw std::invalid_argument("malformed fault '" + item + "'");
    const std::string kind = item.substr(0, at);
    const std::string when = item.substr(at + 1, colon - at - 1);
    const std::string who = item.substr(colon + 1);
    if (kind == "crash") {
      faults.emplace_back(parse_node(who), netsim::CrashAt{parse_time_us(when)});
    } else if (kind == "partition") {
      const auto dash = when.find('-');
      if (dash == std::string::npos) throw std::invalid_argument("partition needs <start>-<end>");
      netsim::Partition p;
      p.start_us = parse_time_us(when.substr(0, dash));
      p.end_us = parse_time_us(when.substr(dash + 1));
      if (p.end_us <= p.start_us) throw std::invalid_argument("partition window must end after it starts");
      const auto nodes = split(who, '/');
      if (nodes.size() < 2) throw std::invalid_argument("partition needs <node>/<peer>");
      for (std::size_t i = 1; i < nodes.size(); ++i) p.peers.push_back(parse_node(nodes[i]));
      faults.emplace_back(parse_node(nodes[0]), std::move(p));
    } else {
      throw std::invalid_argument("unknown fault kind '" + kind + "'");
    }
  }
  return faults;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gridledger: transactive energy scheduling over a permissioned ledger"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Solve one mode and write outcome JSON and schedule CSV");
  add_scenario_options(run_cmd, run.input);
  run_cmd->add_option("--mode", run.mode, "TEM, BS1, BS2 or BS3");
  run_cmd->add_flag("--distributed", run.distributed, "Use the ADMM decomposition (TEM only)");
  run_cmd->add_option("--transport", run.transport, "inprocess or chain");
  run_cmd->add_option("--rho", run.rho, "Penalty: a positive number or 'reciprocal'");
  run_cmd->add_option("--eps", run.eps, "Convergence tolerance");
  run_cmd->add_option("--max-iter", run.max_iter, "ADMM iteration limit");
  run_cmd->add_option("--validators", run.validators, "Validators for --transport chain");
  run_cmd->add_option("--out", run.out, "Output directory");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "Compare BS1, BS2, BS3 and TEM costs");
  add_scenario_options(compare_cmd, compare.input);
  compare_cmd->add_flag("--distributed", compare.distributed, "Solve TEM with ADMM");
  compare_cmd->add_option("--out", compare.out, "Output directory");

  ChainArgs chain_args;
  auto* chain_cmd = app.add_subcommand("chain", "Run the consensus protocol on the simulated network");
  chain_cmd->add_option("--validators", chain_args.validators, "Number of validators (>= 4)");
  chain_cmd->add_option("--faults", chain_args.faults, "e.g. crash@0:validator1,partition@10ms-200ms:2/0/1");
  chain_cmd->add_option("--mode", chain_args.mode, "modified, classic or both");
  chain_cmd->add_option("--blocks", chain_args.blocks, "Blocks to commit");
  chain_cmd->add_option("--seed", chain_args.seed, "Network seed (GRIDLEDGER_SEED overrides)");
  chain_cmd->add_option("--latency", chain_args.latency, "fixed:<ms> or uniform:<lo>,<hi>");
  chain_cmd->add_option("--out", chain_args.out, "Write the per-block metrics CSV here");
  chain_cmd->add_option("--trace", chain_args.trace, "Write the event trace CSV here");

  LayoutArgs layout;
  auto* layout_cmd = app.add_subcommand("layout", "Print the per-user decision vector layout");
  layout_cmd->add_option("--mode", layout.mode, "TEM, BS1, BS2 or BS3");
  layout_cmd->add_option("--users", layout.users, "Number of users");
  layout_cmd->add_option("--horizon", layout.horizon, "Number of slots");

  QpDumpArgs dump;
  auto* dump_cmd = app.add_subcommand("qp-dump", "Dump the assembled joint QP as CSV");
  add_scenario_options(dump_cmd, dump.input);
  dump_cmd->add_option("--mode", dump.mode, "TEM, BS1, BS2 or BS3");
  dump_cmd->add_option("--out", dump.out, "Output file (default stdout)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic scenario config");
  synth_cmd->add_option("--synthetic", synth.synthetic, "N,T");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed (GRIDLEDGER_SEED overrides)");
  synth_cmd->add_option("--out", synth.out, "Output directory");
  synth_cmd->add_option("--stem", synth.stem, "File name stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run, out, err);
    if (*compare_cmd) return cmd_compare(compare, out, err);
    if (*chain_cmd) return cmd_chain(chain_args, out, err);
    if (*layout_cmd) return cmd_layout(layout, out);
    if (*dump_cmd) return cmd_qp_dump(dump, out);
    if (*synth_cmd) return cmd_synth(synth, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const scenario::ScenarioError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const tem::SolveError& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const netsim::LivenessTimeout& e) {
    err << "error: liveness timeout: " << e.what() << " (last height " << e.min_height() << ")\n";
    return kLiveness;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace gridledger::cli

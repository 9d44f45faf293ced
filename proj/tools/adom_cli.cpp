// adom: command-line front end for running and checking ADOM+ experiments.
//
//   adom run <config.json>
//   adom sweep <config.json> --axis kappa --values 10,100,1000
//   adom validate-gossip <config.json>
//   adom lowerbound <config.json> --certify
//   adom params --L 4 --mu 1 --chi 1
//
// Exit codes: 0 success, 2 failed certification or gossip validation, 1 error.

#include "adom/adomplus.hpp"
#include "adom/harness.hpp"
#include "adom/lowerbound.hpp"
#include "adom/netmodel.hpp"
#include "adom/numfmt.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kCheckFailed = 2;

int cmd_run(const std::string& config_path) {
  const adom::ExperimentConfig config = adom::load_config(config_path);
  const adom::ExperimentResult result = adom::run_experiment(config);
  if (config.output.path.empty()) {
    // records go to stdout so the run can be piped; the summary to stderr
    adom::write_records_csv(std::cout, result.records);
    std::cerr << adom::to_json(result.summary) << '\n';
  } else {
    std::cout << adom::to_json(result.summary) << '\n';
  }
  if (result.summary.certification && !result.summary.certification->passed()) return kCheckFailed;
  return kOk;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_name, const std::vector<double>& values,
              const std::string& table_path, unsigned jobs) {
  const adom::ExperimentConfig config = adom::load_config(config_path);
  const adom::SweepAxis axis = adom::sweep_axis_from_string(axis_name);
  const auto rows = adom::sweep(config, axis, values, jobs);
  if (table_path.empty()) {
    adom::write_sweep_csv(std::cout, axis, rows);
  } else {
    const auto path = adom::resolve_output_path(table_path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    adom::write_sweep_csv(out, axis, rows);
    std::cout << path.string() << '\n';
  }
  for (const auto& r : rows)
    if (!r.ok) std::cerr << "sweep entry " << adom::format_double(r.value) << " failed: " << r.error << '\n';
  return kOk;
}

int cmd_validate_gossip(const std::string& config_path, std::optional<std::uint64_t> rounds, int samples) {
  const adom::ExperimentConfig config = adom::load_config(config_path);
  const adom::GossipSequence seq(adom::schedule_for(config));
  const std::uint64_t horizon = rounds.value_or(seq.schedule().period());
  const adom::ChiEstimate est = adom::estimate_chi(seq, seq.schedule().period());
  double chi = est.chi;
  if (config.topology.chi) {
    if (*config.topology.chi < est.chi * (1.0 - 1e-9))
      throw std::invalid_argument("declared chi " + adom::format_double(*config.topology.chi) +
                                  " is below the measured " + adom::format_double(est.chi));
    chi = *config.topology.chi;
  }

  json failures = json::array();
  double worst = 0.0;
  for (std::uint64_t q = 0; q < horizon; ++q) {
    const auto& w = seq.at(q);
    const auto rep = adom::validate_gossip(w, seq.schedule().edges(q), chi, samples, q + 1);
    worst = std::max(worst, rep.worst_contraction_ratio);
    if (!rep.ok()) failures.push_back({{"round", q}, {"failures", rep.failures}});
  }
  json out = {{"topology", adom::to_string(seq.schedule().kind())},
              {"n", seq.n()},
              {"period", seq.schedule().period()},
              {"rounds_checked", horizon},
              {"chi_measured", est.chi},
              {"chi", chi},
              {"contraction_bound", 1.0 - 1.0 / chi},
              {"worst_contraction_ratio", worst},
              {"passed", failures.empty()},
              {"failures", failures}};
  std::cout << out.dump(2) << '\n';
  return failures.empty() ? kOk : kCheckFailed;
}

int cmd_lowerbound(const std::string& config_path, bool certify, std::uint64_t q_max, const std::string& curve_path) {
  adom::ExperimentConfig config = adom::load_config(config_path);
  if (config.problem.type != adom::ProblemType::HardInstance)
    throw std::invalid_argument("lowerbound needs a hard_instance problem");
  const auto& p = config.problem;
  const auto inst = adom::build_hard_instance(p.chi, p.L, p.mu, p.d_trunc);
  const auto curve = adom::lower_bound_curve(p.chi, p.L, p.mu, q_max);

  json out = {{"chi", p.chi},
              {"n", inst.n},
              {"L", p.L},
              {"mu", p.mu},
              {"d_trunc", p.d_trunc},
              {"rho", inst.rho},
              {"rho_lower_estimate_holds", adom::rho_lower_estimate_holds(p.L, p.mu)},
              {"curve_constant", inst.curve_constant()}};
  if (config.stop.target_eps)
    out["computation_reference"] = std::sqrt(p.L / p.mu) * std::log(1.0 / *config.stop.target_eps);

  if (!curve_path.empty()) {
    const auto path = adom::resolve_output_path(curve_path);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << adom::curve_to_csv(curve);
    out["curve_path"] = path.string();
  }

  int code = kOk;
  if (certify) {
    config.certify = true;
    const auto result = adom::run_experiment(config);
    const auto& cert = *result.summary.certification;
    const json report = json::parse(adom::to_json(cert, {}));
    out["certification"] = {{"passed", report.at("passed")},
                            {"entries", report.at("entries")},
                            {"first_violation", report.at("first_violation")},
                            {"iterations", result.summary.iterations},
                            {"comm_rounds", result.summary.comm_rounds}};
    if (!cert.passed()) code = kCheckFailed;
  }
  std::cout << out.dump(2) << '\n';
  return code;
}

int cmd_params(double L, double mu, double chi, std::optional<int> t) {
  const int steps = t.value_or(1);
  const double chi_eff = adom::effective_chi(chi, steps);
  const adom::AdomPlusParams params = adom::derive_params(L, mu, chi_eff);
  json out = json::parse(adom::to_json(params));
  out["chi"] = chi;
  out["T"] = steps;
  out["chi_eff"] = chi_eff;
  out["T_opt"] = adom::optimal_consensus_steps(chi);
  out["rate"] = adom::lyapunov_rate(L, mu, chi_eff);
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ADOM+ decentralized optimization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

  std::string axis;
  std::vector<double> values;
  std::string table_path;
  unsigned jobs = 0;
  auto* sw = app.add_subcommand("sweep", "run one experiment per value along an axis");
  sw->add_option("config", config_path, "base config (JSON)")->required()->check(CLI::ExistingFile);
  sw->add_option("--axis", axis, "kappa, chi or T")->required();
  sw->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  sw->add_option("--out", table_path, "write the sweep table here instead of stdout");
  sw->add_option("--jobs", jobs, "parallel runs (0: all cores)");

  std::optional<std::uint64_t> rounds;
  int samples = 50;
  auto* vg = app.add_subcommand("validate-gossip", "check the gossip axioms on the config's schedule");
  vg->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  vg->add_option("--rounds", rounds, "rounds to check (default: one period)");
  vg->add_option("--samples", samples, "random zero-sum vectors per round");

  bool certify = false;
  std::uint64_t q_max = 100;
  std::string curve_path;
  auto* lb = app.add_subcommand("lowerbound", "hard instance summary and run certification");
  lb->add_option("config", config_path, "hard_instance config (JSON)")->required()->check(CLI::ExistingFile);
  lb->add_flag("--certify", certify, "run ADOM+ and certify the trace");
  lb->add_option("--q-max", q_max, "last round of the lower-bound curve");
  lb->add_option("--curve", curve_path, "write the lower-bound curve CSV here");

  double L = 0, mu = 0, chi = 1;
  std::optional<int> t;
  auto* pr = app.add_subcommand("params", "print the derived parameter schedule");
  pr->add_option("--L", L, "smoothness")->required();
  pr->add_option("--mu", mu, "strong convexity")->required();
  pr->add_option("--chi", chi, "network condition number")->required();
  pr->add_option("--T", t, "consensus steps per iteration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*sw) return cmd_sweep(config_path, axis, values, table_path, jobs);
    if (*vg) return cmd_validate_gossip(config_path, rounds, samples);
    if (*lb) return cmd_lowerbound(config_path, certify, q_max, curve_path);
    if (*pr) return cmd_params(L, mu, chi, t);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}

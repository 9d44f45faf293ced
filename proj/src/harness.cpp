#include "adom/harness.hpp"

#include "adom/numfmt.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace adom {

namespace {

using nlohmann::json;

// Budget used when a config only gives a target.
constexpr std::uint64_t kUnboundedBudget = 100'000'000;

std::string problem_type_name(ProblemType t) {
  switch (t) {
    case ProblemType::SyntheticLogistic: return "synthetic_logistic";
    case ProblemType::Quadratic: return "quadratic";
    case ProblemType::HardInstance: return "hard_instance";
  }
  return "?";
}

ProblemType problem_type_from_string(const std::string& s) {
  if (s == "synthetic_logistic") return ProblemType::SyntheticLogistic;
  if (s == "quadratic") return ProblemType::Quadratic;
  if (s == "hard_instance") return ProblemType::HardInstance;
  throw std::invalid_argument("unknown problem type '" + s + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string metric_name(ErrorMetric m) { return m == ErrorMetric::Stacked ? "stacked" : "mean_block"; }

double& param_field(AdomPlusParams& p, const std::string& name) {
  if (name == "tau1") return p.tau1;
  if (name == "tau2") return p.tau2;
  if (name == "eta") return p.eta;
  if (name == "alpha") return p.alpha;
  if (name == "nu") return p.nu;
  if (name == "beta") return p.beta;
  if (name == "sigma1") return p.sigma1;
  if (name == "sigma2") return p.sigma2;
  if (name == "theta") return p.theta;
  if (name == "gamma") return p.gamma;
  if (name == "delta") return p.delta;
  if (name == "zeta") return p.zeta;
  throw std::invalid_argument("unknown parameter override '" + name + "'");
}

json record_to_json(const RunRecord& r) {
  return {{"k", r.k},
          {"comm_rounds", r.comm_rounds},
          {"grad_calls", r.grad_calls},
          {"err_sq_stacked", r.err_sq_stacked},
          {"err_sq_mean_block", r.err_sq_mean_block},
          {"psi_x", r.psi_x},
          {"psi_yz", r.psi_yz}};
}

std::string with_context(const ExperimentConfig& c, const std::string& what) {
  return "experiment (" + problem_type_name(c.problem.type) + ", n=" + std::to_string(c.problem.n) + "): " + what;
}

std::string format_value(double v) { return format_double(v); }

}  // namespace

void ExperimentConfig::validate() const {
  const auto& p = problem;
  if (p.type == ProblemType::HardInstance) {
    if (!(p.chi >= 3.0)) throw std::invalid_argument("hard_instance.chi must be >= 3");
    if (p.d_trunc < 4) throw std::invalid_argument("hard_instance.d_trunc must be >= 4");
  } else {
    if (p.n < 2) throw std::invalid_argument("problem.n must be >= 2");
    if (p.d < 1) throw std::invalid_argument("problem.d must be >= 1");
  }
  if (p.type == ProblemType::SyntheticLogistic) {
    if (p.m < 1) throw std::invalid_argument("problem.m must be >= 1");
    if (!(p.kappa > 1.0)) throw std::invalid_argument("problem.kappa must be > 1");
  } else if (!(p.mu > 0.0) || !(p.L > p.mu)) {
    throw std::invalid_argument("problem needs L > mu > 0");
  }
  if (!stop.budget && !stop.target_eps) throw std::invalid_argument("stop needs a budget or a target_eps");
  if (stop.target_eps && !(*stop.target_eps > 0.0)) throw std::invalid_argument("stop.target_eps must be positive");
  if (algorithm.consensus_steps && *algorithm.consensus_steps < 1)
    throw std::invalid_argument("algorithm.T must be >= 1");
  for (const auto& [name, value] : algorithm.param_overrides) {
    AdomPlusParams probe;
    (void)param_field(probe, name);
    if (!(value > 0.0) || !std::isfinite(value))
      throw std::invalid_argument("parameter override '" + name + "' must be positive");
  }
  if (topology.chi && !(*topology.chi >= 1.0)) throw std::invalid_argument("declared chi must be >= 1");
  if (certify) {
    if (p.type != ProblemType::HardInstance) throw std::invalid_argument("certify requires a hard_instance problem");
    if (topology.kind && *topology.kind != TopologyKind::LowerBoundStar)
      throw std::invalid_argument("certify requires the lower_bound_star topology");
  }
  if (!(reference_tol > 0.0)) throw std::invalid_argument("reference_tol must be positive");
}

ExperimentConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig c;

  const json& pj = j.at("problem");
  c.problem.type = problem_type_from_string(pj.at("type").get<std::string>());
  read_opt(pj, "n", c.problem.n);
  read_opt(pj, "m", c.problem.m);
  read_opt(pj, "d", c.problem.d);
  read_opt(pj, "kappa", c.problem.kappa);
  read_opt(pj, "L", c.problem.L);
  read_opt(pj, "mu", c.problem.mu);
  read_opt(pj, "chi", c.problem.chi);
  read_opt(pj, "d_trunc", c.problem.d_trunc);
  read_opt(pj, "seed", c.problem.seed);

  if (j.contains("topology")) {
    const json& tj = j.at("topology");
    if (tj.contains("kind")) c.topology.kind = topology_kind_from_string(tj.at("kind").get<std::string>());
    read_opt(tj, "radius", c.topology.geometric.radius);
    read_opt(tj, "pool_size", c.topology.geometric.pool_size);
    read_opt(tj, "seed", c.topology.seed);
    if (tj.contains("chi") && !tj.at("chi").is_null()) c.topology.chi = tj.at("chi").get<double>();
  }

  if (j.contains("algorithm")) {
    const json& aj = j.at("algorithm");
    if (aj.contains("T")) {
      const json& t = aj.at("T");
      if (t.is_string()) {
        if (t.get<std::string>() != "auto") throw std::invalid_argument("algorithm.T must be an integer or \"auto\"");
        c.algorithm.consensus_steps.reset();
      } else {
        c.algorithm.consensus_steps = t.get<int>();
      }
    }
    if (aj.contains("param_overrides"))
      c.algorithm.param_overrides = aj.at("param_overrides").get<std::map<std::string, double>>();
  }

  if (j.contains("stop")) {
    const json& sj = j.at("stop");
    if (sj.contains("budget") && !sj.at("budget").is_null()) c.stop.budget = sj.at("budget").get<std::uint64_t>();
    if (sj.contains("target_eps") && !sj.at("target_eps").is_null())
      c.stop.target_eps = sj.at("target_eps").get<double>();
    if (sj.contains("metric")) {
      const auto m = sj.at("metric").get<std::string>();
      if (m == "stacked") c.stop.metric = ErrorMetric::Stacked;
      else if (m == "mean_block") c.stop.metric = ErrorMetric::MeanBlock;
      else throw std::invalid_argument("stop.metric must be \"stacked\" or \"mean_block\"");
    }
    read_opt(sj, "relative", c.stop.relative);
  }

  if (j.contains("output")) {
    const json& oj = j.at("output");
    read_opt(oj, "path", c.output.path);
    if (oj.contains("format")) {
      const auto f = oj.at("format").get<std::string>();
      if (f == "csv") c.output.format = OutputFormat::Csv;
      else if (f == "json") c.output.format = OutputFormat::Json;
      else throw std::invalid_argument("output.format must be \"csv\" or \"json\"");
    }
  }
  read_opt(j, "certify", c.certify);
  read_opt(j, "reference_tol", c.reference_tol);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["problem"] = {{"type", problem_type_name(c.problem.type)}, {"n", c.problem.n},       {"m", c.problem.m},
                  {"d", c.problem.d},       {"kappa", c.problem.kappa}, {"L", c.problem.L},
                  {"mu", c.problem.mu},     {"chi", c.problem.chi},     {"d_trunc", c.problem.d_trunc},
                  {"seed", c.problem.seed}};
  json t = {{"radius", c.topology.geometric.radius},
            {"pool_size", c.topology.geometric.pool_size},
            {"seed", c.topology.seed}};
  if (c.topology.kind) t["kind"] = to_string(*c.topology.kind);
  t["chi"] = c.topology.chi ? json(*c.topology.chi) : json(nullptr);
  j["topology"] = t;
  j["algorithm"] = {{"T", c.algorithm.consensus_steps ? json(*c.algorithm.consensus_steps) : json("auto")},
                    {"param_overrides", c.algorithm.param_overrides}};
  j["stop"] = {{"budget", c.stop.budget ? json(*c.stop.budget) : json(nullptr)},
               {"target_eps", c.stop.target_eps ? json(*c.stop.target_eps) : json(nullptr)},
               {"metric", metric_name(c.stop.metric)},
               {"relative", c.stop.relative}};
  j["output"] = {{"path", c.output.path}, {"format", c.output.format == OutputFormat::Csv ? "csv" : "json"}};
  j["certify"] = c.certify;
  j["reference_tol"] = c.reference_tol;
  return j.dump(2);
}

AdomPlusParams apply_overrides(AdomPlusParams params, const std::map<std::string, double>& overrides) {
  for (const auto& [name, value] : overrides) {
    if (!(value > 0.0) || !std::isfinite(value))
      throw std::invalid_argument("parameter override '" + name + "' must be positive");
    param_field(params, name) = value;
  }
  return params;
}

int problem_nodes(const ProblemConfig& problem) {
  if (problem.type == ProblemType::HardInstance) return 3 * static_cast<int>(std::floor(problem.chi / 3.0));
  return problem.n;
}

TopologySchedule schedule_for(const ExperimentConfig& config) {
  const TopologyKind kind = config.topology.kind.value_or(config.problem.type == ProblemType::HardInstance
                                                              ? TopologyKind::LowerBoundStar
                                                              : TopologyKind::RandomGeometricCycle);
  return build_schedule(kind, problem_nodes(config.problem), config.topology.geometric, config.topology.seed);
}

PreparedExperiment prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  try {
    PreparedExperiment prep;
    const auto& p = config.problem;
    Eigen::VectorXd x_star;
    switch (p.type) {
      case ProblemType::SyntheticLogistic:
        prep.objectives = gen_synthetic_logistic(p.n, p.m, p.d, p.seed, p.kappa);
        x_star = reference_minimizer(prep.objectives, config.reference_tol).x;
        break;
      case ProblemType::Quadratic:
        prep.objectives = gen_random_quadratic(p.n, p.d, p.L, p.mu, p.seed);
        x_star = quadratic_minimizer(prep.objectives);
        break;
      case ProblemType::HardInstance:
        prep.hard = build_hard_instance(p.chi, p.L, p.mu, p.d_trunc);
        prep.objectives = prep.hard->objectives;
        x_star = quadratic_minimizer(prep.objectives);
        break;
    }

    auto schedule = schedule_for(config);
    const std::uint64_t period = schedule.period();
    prep.sequence = std::make_shared<const GossipSequence>(std::move(schedule));
    prep.chi_measured = estimate_chi(*prep.sequence, period).chi;
    if (config.topology.chi) {
      if (*config.topology.chi < prep.chi_measured * (1.0 - 1e-9))
        throw std::invalid_argument("declared chi " + format_value(*config.topology.chi) +
                                    " is below the measured " + format_value(prep.chi_measured));
      prep.chi = *config.topology.chi;
    } else {
      prep.chi = prep.chi_measured;
    }

    prep.consensus_steps = config.algorithm.consensus_steps.value_or(optimal_consensus_steps(prep.chi));
    prep.chi_eff = effective_chi(prep.chi, prep.consensus_steps);
    prep.params = apply_overrides(derive_params(prep.objectives.L(), prep.objectives.mu(), prep.chi_eff),
                                  config.algorithm.param_overrides);
    prep.reference = make_reference(prep.objectives, x_star, prep.params.nu);
    return prep;
  } catch (const std::exception& e) {
    throw std::runtime_error(with_context(config, e.what()));
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  PreparedExperiment prep = prepare_experiment(config);
  const Mixer mixer(prep.sequence, prep.consensus_steps);

  RunOptions opts;
  opts.budget = config.stop.budget.value_or(kUnboundedBudget);
  opts.target_eps = config.stop.target_eps;
  opts.metric = config.stop.metric;
  opts.relative = config.stop.relative;

  std::vector<TraceEntry> trace;
  if (config.certify) {
    const int t = prep.consensus_steps;
    opts.observer = [&trace, t](const AdomPlusState& s) {
      TraceEntry entry;
      if (s.k > 0) {
        entry.rounds.push_back({RoundKind::Compute, 0});
        for (int r = 0; r < t; ++r)
          entry.rounds.push_back({RoundKind::Communicate, (s.k - 1) * static_cast<std::uint64_t>(t) + r});
      }
      entry.x = s.x;
      trace.push_back(std::move(entry));
    };
  }

  ExperimentResult out;
  RunResult rr;
  try {
    rr = run(prep.objectives, mixer, prep.params, prep.reference,
             AdomPlusState::zeros(prep.objectives.n(), prep.objectives.d()), opts);
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.iteration(), with_context(config, e.what()));
  } catch (const std::exception& e) {
    throw std::runtime_error(with_context(config, e.what()));
  }

  auto& s = out.summary;
  const RunRecord& last = rr.records.back();
  s.iterations = last.k;
  s.comm_rounds = last.comm_rounds;
  s.grad_calls = last.grad_calls;
  s.err_sq_stacked = last.err_sq_stacked;
  s.err_sq_mean_block = last.err_sq_mean_block;
  s.reached_target = rr.reached_target;
  s.chi_measured = prep.chi_measured;
  s.chi = prep.chi;
  s.chi_eff = prep.chi_eff;
  s.consensus_steps = prep.consensus_steps;
  s.params = prep.params;
  if (config.certify) s.certification = certify_run(trace, *prep.hard);
  out.records = std::move(rr.records);

  if (!config.output.path.empty()) {
    const auto path = resolve_output_path(config.output.path);
    emit(out.records, config.output.format, path);
    s.output_path = path.string();
  }
  s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::string to_json(const ExperimentSummary& s) {
  json j;
  j["iterations"] = s.iterations;
  j["comm_rounds"] = s.comm_rounds;
  j["grad_calls"] = s.grad_calls;
  j["err_sq_stacked"] = s.err_sq_stacked;
  j["err_sq_mean_block"] = s.err_sq_mean_block;
  j["reached_target"] = s.reached_target;
  j["chi_measured"] = s.chi_measured;
  j["chi"] = s.chi;
  j["chi_eff"] = s.chi_eff;
  j["T"] = s.consensus_steps;
  j["params"] = json::parse(to_json(s.params));
  j["wall_seconds"] = s.wall_seconds;
  if (s.certification) {
    const json cert = json::parse(to_json(*s.certification, {}));
    j["certification"] = {{"passed", cert.at("passed")},
                          {"entries", cert.at("entries")},
                          {"first_violation", cert.at("first_violation")}};
  }
  if (!s.output_path.empty()) j["output_path"] = s.output_path;
  return j.dump(2);
}

std::filesystem::path resolve_output_path(const std::string& path) {
  const char* dir = std::getenv("ADOM_OUTPUT_DIR");
  if (dir == nullptr || *dir == '\0') return path;
  return std::filesystem::path(dir) / std::filesystem::path(path).filename();
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "kappa") return SweepAxis::Kappa;
  if (s == "chi") return SweepAxis::Chi;
  if (s == "T") return SweepAxis::T;
  throw std::invalid_argument("unknown sweep axis '" + s + "' (expected kappa, chi or T)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Kappa: return "kappa";
    case SweepAxis::Chi: return "chi";
    case SweepAxis::T: return "T";
  }
  return "?";
}

ExperimentConfig sweep_entry(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig c = base;
  switch (axis) {
    case SweepAxis::Kappa:
      if (c.problem.type == ProblemType::SyntheticLogistic) c.problem.kappa = value;
      else c.problem.L = value * c.problem.mu;
      break;
    case SweepAxis::Chi:
      if (c.problem.type != ProblemType::HardInstance)
        throw std::invalid_argument("a chi sweep needs the hard_instance problem family");
      c.problem.chi = value;
      c.topology.chi.reset();
      break;
    case SweepAxis::T:
      if (value < 1.0 || value != std::floor(value)) throw std::invalid_argument("T values must be positive integers");
      c.algorithm.consensus_steps = static_cast<int>(value);
      break;
  }
  if (!c.output.path.empty()) {
    std::filesystem::path p(c.output.path);
    const std::string stem = p.stem().string() + "_" + to_string(axis) + format_value(value);
    c.output.path = (p.parent_path() / (stem + p.extension().string())).string();
  }
  c.validate();
  return c;
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values,
                            unsigned max_parallel) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  if (max_parallel == 0) max_parallel = std::max(1u, std::thread::hardware_concurrency());

  auto one = [&base, axis](double value) {
    SweepRow row;
    row.value = value;
    try {
      const ExperimentResult r = run_experiment(sweep_entry(base, axis, value));
      row.ok = true;
      row.iterations = r.summary.iterations;
      row.comm_rounds = r.summary.comm_rounds;
      row.grad_calls = r.summary.grad_calls;
      row.reached_target = r.summary.reached_target;
      row.final_error = base.stop.metric == ErrorMetric::Stacked ? r.summary.err_sq_stacked
                                                                 : r.summary.err_sq_mean_block;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  std::vector<SweepRow> rows(values.size());
  for (std::size_t begin = 0; begin < values.size(); begin += max_parallel) {
    const std::size_t end = std::min(values.size(), begin + max_parallel);
    std::vector<std::future<SweepRow>> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(std::async(std::launch::async, one, values[i]));
    for (std::size_t i = begin; i < end; ++i) rows[i] = batch[i - begin].get();
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows) {
  out << to_string(axis) << ",ok,iterations,comm_rounds,grad_calls,reached_target,final_error,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << format_value(r.value) << ',' << (r.ok ? 1 : 0) << ',' << r.iterations << ',' << r.comm_rounds << ','
        << r.grad_calls << ',' << (r.reached_target ? 1 : 0) << ',' << format_value(r.final_error) << ',' << err
        << '\n';
  }
}

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << kRecordCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.k << ',' << r.comm_rounds << ',' << r.grad_calls << ',' << format_double(r.err_sq_stacked) << ','
        << format_double(r.err_sq_mean_block) << ',' << format_double(r.psi_x) << ',' << format_double(r.psi_yz)
        << '\n';
  }
}

void write_records_json(std::ostream& out, const std::vector<RunRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(record_to_json(r));
  out << arr.dump() << '\n';
}

std::vector<RunRecord> records_from_json(const std::string& text) {
  std::vector<RunRecord> out;
  for (const auto& j : json::parse(text)) {
    RunRecord r;
    r.k = j.at("k").get<std::uint64_t>();
    r.comm_rounds = j.at("comm_rounds").get<std::uint64_t>();
    r.grad_calls = j.at("grad_calls").get<std::uint64_t>();
    r.err_sq_stacked = j.at("err_sq_stacked").get<double>();
    r.err_sq_mean_block = j.at("err_sq_mean_block").get<double>();
    r.psi_x = j.at("psi_x").get<double>();
    r.psi_yz = j.at("psi_yz").get<double>();
    out.push_back(r);
  }
  return out;
}

void emit(const std::vector<RunRecord>& records, OutputFormat format, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == OutputFormat::Csv) write_records_csv(out, records);
  else write_records_json(out, records);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace adom

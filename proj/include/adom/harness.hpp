#pragma once

// Experiment orchestration: JSON configs, single runs with metering, sweeps
// over kappa / chi / T, and CSV or JSON record output.

#include "adom/adomplus.hpp"
#include "adom/lowerbound.hpp"
#include "adom/netmodel.hpp"
#include "adom/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace adom {

enum class ProblemType { SyntheticLogistic, Quadratic, HardInstance };

struct ProblemConfig {
  ProblemType type = ProblemType::SyntheticLogistic;
  int n = 10;
  int m = 30;      // samples per node, logistic only
  int d = 20;
  double kappa = 1000;  // logistic only
  double L = 100;       // quadratic and hard instance
  double mu = 1;
  double chi = 9;       // hard instance: n = 3 floor(chi / 3)
  int d_trunc = 50;
  std::uint64_t seed = 1;
};

struct TopologyConfig {
  std::optional<TopologyKind> kind;  // hard instances default to the lower-bound star
  GeometricParams geometric;
  std::uint64_t seed = 1;
  std::optional<double> chi;  // declared; must not be below the measured value
};

struct AlgorithmConfig {
  std::optional<int> consensus_steps = 1;  // nullopt means ceil(chi ln 2)
  std::map<std::string, double> param_overrides;
};

struct StopConfig {
  std::optional<std::uint64_t> budget;
  std::optional<double> target_eps;
  ErrorMetric metric = ErrorMetric::Stacked;
  bool relative = false;
};

enum class OutputFormat { Csv, Json };

struct OutputConfig {
  std::string path;  // empty: no record file
  OutputFormat format = OutputFormat::Csv;
};

struct ExperimentConfig {
  ProblemConfig problem;
  TopologyConfig topology;
  AlgorithmConfig algorithm;
  StopConfig stop;
  OutputConfig output;
  bool certify = false;
  double reference_tol = 1e-12;

  // Throws std::invalid_argument on a broken invariant.
  void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& config);

// Node count implied by the problem (hard instances round chi down to a multiple of 3).
int problem_nodes(const ProblemConfig& problem);

// Topology schedule for the config; hard instances default to the lower-bound star.
TopologySchedule schedule_for(const ExperimentConfig& config);

// Everything a run needs, built from a config.
struct PreparedExperiment {
  LocalObjectiveSet objectives;
  std::optional<HardInstance> hard;
  std::shared_ptr<const GossipSequence> sequence;
  double chi_measured = 1;
  double chi = 1;
  int consensus_steps = 1;
  double chi_eff = 1;
  AdomPlusParams params;
  SaddleReference reference;
};

PreparedExperiment prepare_experiment(const ExperimentConfig& config);

// Applies named overrides (tau1, tau2, eta, alpha, nu, beta, sigma1, sigma2,
// theta, gamma, delta, zeta); values must be positive.
AdomPlusParams apply_overrides(AdomPlusParams params, const std::map<std::string, double>& overrides);

struct ExperimentSummary {
  std::uint64_t iterations = 0;
  std::uint64_t comm_rounds = 0;
  std::uint64_t grad_calls = 0;
  double err_sq_stacked = 0;
  double err_sq_mean_block = 0;
  bool reached_target = false;
  double chi_measured = 1;
  double chi = 1;
  double chi_eff = 1;
  int consensus_steps = 1;
  AdomPlusParams params;
  double wall_seconds = 0;
  std::optional<CertReport> certification;
  std::string output_path;
};

struct ExperimentResult {
  ExperimentSummary summary;
  std::vector<RunRecord> records;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

std::string to_json(const ExperimentSummary& summary);

// Resolves an output path against the ADOM_OUTPUT_DIR override, if set.
std::filesystem::path resolve_output_path(const std::string& path);

enum class SweepAxis { Kappa, Chi, T };

SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis axis);

struct SweepRow {
  double value = 0;
  bool ok = false;
  std::string error;
  std::uint64_t iterations = 0;
  std::uint64_t comm_rounds = 0;
  std::uint64_t grad_calls = 0;
  bool reached_target = false;
  double final_error = 0;
};

// Config for one sweep entry; each entry writes its own output file.
ExperimentConfig sweep_entry(const ExperimentConfig& base, SweepAxis axis, double value);

// Runs every entry, up to max_parallel at a time (0: hardware concurrency).
// A failed entry is reported in its row and the rest still run.
std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values,
                            unsigned max_parallel = 0);

void write_sweep_csv(std::ostream& out, SweepAxis axis, const std::vector<SweepRow>& rows);

inline constexpr const char* kRecordCsvHeader =
    "k,comm_rounds,grad_calls,err_sq_stacked,err_sq_mean_block,psi_x,psi_yz";

void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records);
void write_records_json(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> records_from_json(const std::string& text);
void emit(const std::vector<RunRecord>& records, OutputFormat format, const std::filesystem::path& path);

}  // namespace adom

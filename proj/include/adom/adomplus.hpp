#pragma once

// ADOM+: accelerated primal decentralized optimization over time-varying
// networks, with optional multi-consensus, plus the potential-function
// monitor that certifies its per-iteration contraction.

#include "adom/dvector.hpp"
#include "adom/netmodel.hpp"
#include "adom/oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace adom {

struct AdomPlusParams {
  double tau1 = 0, tau2 = 0;
  double eta = 0, alpha = 0, nu = 0;
  double beta = 0;
  double sigma1 = 0, sigma2 = 0;
  double theta = 0, gamma = 0, delta = 0, zeta = 0;

  // Throws unless every field is positive and finite, nu < mu is the caller's concern.
  void validate() const;
};

// Closed-form schedule that the convergence proof is carried out with.
AdomPlusParams derive_params(double L, double mu, double chi);

// ceil(chi * ln 2): the number of gossip rounds per iteration that brings
// the multi-consensus contraction factor down to 1/2.
int optimal_consensus_steps(double chi);

// Condition number to feed derive_params when each iteration uses T gossip
// rounds: chi itself for T = 1, 2 once T reaches ceil(chi ln 2), and
// 1 / (1 - (1 - 1/chi)^T) in between.
double effective_chi(double chi, int t);

struct AdomPlusState {
  std::uint64_t k = 0;
  DistVec x, y, z, m;
  DistVec x_f, y_f, z_f;
  std::uint64_t comm_rounds = 0;
  std::uint64_t grad_calls = 0;

  // x_f = x, y_f = y, z_f = z; z must lie in the zero-sum space.
  static AdomPlusState initial(DistVec x0, DistVec y0, DistVec z0, DistVec m0);
  static AdomPlusState zeros(int n, int d);
};

struct StepIntermediates {
  DistVec x_g, y_g, z_g;
};

// Round-k communication: W(k;T) applied to a batch of payloads.
class Mixer {
 public:
  Mixer(std::shared_ptr<const GossipSequence> sequence, int consensus_steps);

  int consensus_steps() const { return t_; }
  int n() const { return sequence_->n(); }
  const GossipSequence& sequence() const { return *sequence_; }
  std::vector<DistVec> apply(std::uint64_t k, const std::vector<DistVec>& payloads) const;

 private:
  std::shared_ptr<const GossipSequence> sequence_;
  int t_;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  std::uint64_t iteration() const { return iteration_; }

 private:
  std::uint64_t iteration_;
};

// One pass of the update loop body. The mutually implicit x/y updates are
// solved in closed form; grad_F is called once and the mixer once.
AdomPlusState step(const AdomPlusState& state, const AdomPlusParams& params,
                   const LocalObjectiveSet& objectives, const Mixer& mixer,
                   StepIntermediates* intermediates = nullptr);

// Saddle point (x*, y*, z*) of the lifted problem, built from a minimizer of sum f_i.
struct SaddleReference {
  Eigen::VectorXd x_block;
  DistVec x, y, z;
};

// y* = grad F(x*) - nu x*, z* = -nu x* - y* projected onto the zero-sum space.
// Throws if the unprojected z* is not zero-sum to 1e-8 relative or y* + z* is not consensus.
SaddleReference make_reference(const LocalObjectiveSet& objectives, const Eigen::VectorXd& x_block, double nu);

struct LyapunovReport {
  double dist_x = 0;         // ||x - x*||^2
  double bregman_gap = 0;    // D_F(x_f, x*) - nu/2 ||x_f - x*||^2
  double dist_y = 0;         // ||y - y*||^2
  double dist_y_f = 0;       // ||y_f - y*||^2
  double dist_z_hat = 0;     // ||z - P m - z*||^2
  double momentum = 0;       // ||P m||^2
  double coupled = 0;        // ||y_f + z_f - (y* + z*)||^2
  double psi_x = 0;
  double psi_yz = 0;

  double total() const { return psi_x + psi_yz; }
};

LyapunovReport lyapunov(const AdomPlusState& state, const AdomPlusParams& params,
                        const LocalObjectiveSet& objectives, const SaddleReference& reference);

// Geometric rate 1 - sqrt(mu) / (32 chi sqrt(L)) of the combined potential.
double lyapunov_rate(double L, double mu, double chi);

struct RunRecord {
  std::uint64_t k = 0;
  std::uint64_t comm_rounds = 0;
  std::uint64_t grad_calls = 0;
  double err_sq_stacked = 0;
  double err_sq_mean_block = 0;
  double psi_x = 0;
  double psi_yz = 0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

enum class ErrorMetric { Stacked, MeanBlock };

struct RunOptions {
  std::uint64_t budget = 1000;
  std::optional<double> target_eps;
  ErrorMetric metric = ErrorMetric::MeanBlock;
  // Divide the error by ||x*||^2 (stacked or single block, matching the metric).
  bool relative = false;
  // Called with every state including the initial one.
  std::function<void(const AdomPlusState&)> observer;
};

struct RunResult {
  std::vector<RunRecord> records;
  AdomPlusState final_state;
  bool reached_target = false;
};

RunRecord make_record(const AdomPlusState& state, const AdomPlusParams& params,
                      const LocalObjectiveSet& objectives, const SaddleReference& reference);

RunResult run(const LocalObjectiveSet& objectives, const Mixer& mixer, const AdomPlusParams& params,
              const SaddleReference& reference, AdomPlusState initial, const RunOptions& options);

// Directory with header.json (k, counters, params, chi_eff, shape) and one
// little-endian binary file per state field.
void save_checkpoint(const std::filesystem::path& dir, const AdomPlusState& state,
                     const AdomPlusParams& params, double chi_eff);

struct Checkpoint {
  AdomPlusState state;
  AdomPlusParams params;
  double chi_eff = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string to_json(const AdomPlusParams& params);

}  // namespace adom

#pragma once

// Adversarial instance for decentralized first-order methods over
// time-varying networks: star graphs whose center cycles through a relay
// group, a chain quadratic split across the two outer groups, and a
// certifier that checks traced runs against the span bound.

#include "adom/dvector.hpp"
#include "adom/netmodel.hpp"
#include "adom/oracle.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace adom {

enum class NodeGroup { Head, Relay, Tail };  // V1, V2, V3

struct HardInstance {
  double chi = 3;
  int n = 3;
  double L = 2;
  double mu = 1;
  int d_trunc = 4;
  double rho = 0;
  LocalObjectiveSet objectives;

  int group_size() const { return n / 3; }
  NodeGroup group_of(int node) const;
  // Zero-based star center at communication round q.
  int center(std::uint64_t q) const { return lower_bound_center(n, q); }
  // One-based label of the center, matching the usual 1..n node numbering.
  int center_label(std::uint64_t q) const { return center(q) + 1; }
  // rho^4 / (1 - rho^2)
  double curve_constant() const;
  TopologySchedule schedule() const;
};

// (sqrt(2L/(3mu) + 1/3) - 1) / (sqrt(2L/(3mu) + 1/3) + 1)
double hard_rho(double L, double mu);

HardInstance build_hard_instance(double chi, double L, double mu, int d_trunc);

// (rho, rho^2, ..., rho^d_trunc)
Eigen::VectorXd hard_solution(double L, double mu, int d_trunc);

// rho >= max{0, 1 - sqrt(6 mu / L)}
bool rho_lower_estimate_holds(double L, double mu);

class SpanTracker {
 public:
  explicit SpanTracker(int n);

  int n() const { return static_cast<int>(s_.size()); }
  std::uint64_t comm_count() const { return q_; }
  const std::vector<int>& spans() const { return s_; }
  int span(int node) const { return s_[node]; }
  NodeGroup group_of(int node) const;

  // Worst-case local computation: head nodes extend an even prefix, tail nodes an odd one.
  void compute();
  // Star round centered at lower_bound_center(n, q): the center takes the
  // global max, every leaf the max with the center's previous value.
  void communicate();

  // 2 floor(q / |V2|) + (0 for tail nodes and relay nodes from the current
  // center onward, 1 otherwise), with q the number of completed rounds.
  int lemma_bound(int node) const;

 private:
  std::vector<int> s_;
  std::uint64_t q_ = 0;
};

enum class RoundKind { Compute, Communicate };

struct RoundEvent {
  RoundKind kind = RoundKind::Compute;
  std::uint64_t q = 0;  // communication round index, Communicate only
};

// x_i for every node after the listed rounds (rounds since the previous entry).
struct TraceEntry {
  std::vector<RoundEvent> rounds;
  DistVec x;
};

struct CertViolation {
  std::size_t entry = 0;
  int node = 0;
  std::string check;
  std::string detail;
};

struct CertReport {
  std::vector<bool> prefix_ok;
  std::vector<bool> bound_ok;
  std::optional<CertViolation> first_violation;
  std::size_t entries = 0;

  bool passed() const { return !first_violation.has_value(); }
};

// Index of the last coordinate with magnitude above 1e-12, one-based; 0 if none.
int support_prefix(std::span<const double> x, double zero_threshold = 1e-12);

CertReport certify_run(const std::vector<TraceEntry>& trace, const HardInstance& instance);

struct LowerBoundPoint {
  std::uint64_t q = 0;
  double exact = 0;
  double relaxed = 0;
};

// exact = C rho^(24 q / chi), relaxed = C max{0, 1 - 24 sqrt(6 mu / L)}^(q / chi).
std::vector<LowerBoundPoint> lower_bound_curve(double chi, double L, double mu, std::uint64_t q_max);

std::string to_json(const CertReport& report, const std::vector<LowerBoundPoint>& curve);
std::string curve_to_csv(const std::vector<LowerBoundPoint>& curve);

}  // namespace adom

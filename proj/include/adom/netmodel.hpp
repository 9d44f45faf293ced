#pragma once

// Time-varying communication networks: edge schedules, Laplacian gossip
// matrices, axiom validation, and the network condition number chi.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace adom {

// Undirected edge, stored with i < j.
struct Edge {
  int i = 0;
  int j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

using EdgeSet = std::vector<Edge>;

// Sorted, deduplicated, self-loops rejected.
EdgeSet normalize_edges(std::vector<Edge> edges);

EdgeSet ring_edges(int n);
EdgeSet star_edges(int n, int center);
EdgeSet complete_edges(int n);

bool is_connected(const EdgeSet& edges, int n);

enum class TopologyKind { RandomGeometricCycle, RingStarAlternate, LowerBoundStar };

std::string to_string(TopologyKind kind);
TopologyKind topology_kind_from_string(const std::string& s);

struct GeometricParams {
  double radius = 0.3;
  int pool_size = 50;
};

// Deterministic map q -> E^q. Every kind is periodic, so the schedule stores
// one period of edge sets.
class TopologySchedule {
 public:
  TopologySchedule(TopologyKind kind, int n, std::vector<EdgeSet> cycle);

  TopologyKind kind() const { return kind_; }
  int n() const { return n_; }
  std::size_t period() const { return cycle_.size(); }
  const EdgeSet& edges(std::uint64_t q) const { return cycle_[q % cycle_.size()]; }

 private:
  TopologyKind kind_;
  int n_;
  std::vector<EdgeSet> cycle_;
};

TopologySchedule build_schedule(TopologyKind kind, int n, const GeometricParams& params = {},
                                std::uint64_t seed = 0);

// One random geometric graph on [0,1]^2, augmented to be connected with
// path edges (i, i+1) joining distinct components.
EdgeSet random_geometric_graph(int n, double radius, std::uint64_t seed, std::uint64_t graph_index);

// Zero-based center of the star used at round q by the lower-bound schedule.
int lower_bound_center(int n, std::uint64_t q);

struct GossipMatrix {
  Eigen::MatrixXd w;
  std::uint64_t round = 0;
  EdgeSet edges;
  // Nonzero pattern per row, ascending column order.
  std::vector<std::vector<std::pair<int, double>>> rows;

  int n() const { return static_cast<int>(w.rows()); }
  void rebuild_rows();
};

// W = L / lambda_max(L). Throws on a disconnected graph.
GossipMatrix laplacian_gossip(const EdgeSet& edges, int n, std::uint64_t round = 0);

struct Spectrum {
  double lambda_max = 0.0;
  double lambda_min_plus = 0.0;
  double ratio() const { return lambda_max / lambda_min_plus; }
};

// Eigenvalues of a symmetric matrix; lambda_min_plus is the smallest
// eigenvalue above 1e-9 * lambda_max.
Spectrum symmetric_spectrum(const Eigen::MatrixXd& m);

struct ValidationReport {
  bool sparsity = false;
  bool kernel = false;
  bool range = false;
  bool contraction = false;
  bool contraction_spectral_checked = false;
  double max_kernel_residual = 0.0;
  double max_range_residual = 0.0;
  double worst_contraction_ratio = 0.0;  // max ||Wx - x||^2 / ||x||^2 over samples
  std::vector<std::string> failures;

  bool ok() const { return sparsity && kernel && range && contraction; }
};

ValidationReport validate_gossip(const GossipMatrix& w, const EdgeSet& edges, double chi,
                                 int samples = 50, std::uint64_t seed = 1);

struct ChiEstimate {
  double chi = 1.0;
  std::vector<double> per_round;
};

// Caches gossip matrices for one period of a schedule; thread-safe lookup.
class GossipSequence {
 public:
  explicit GossipSequence(TopologySchedule schedule);

  const TopologySchedule& schedule() const { return schedule_; }
  int n() const { return schedule_.n(); }
  const GossipMatrix& at(std::uint64_t q) const;

 private:
  TopologySchedule schedule_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::unique_ptr<GossipMatrix>> cache_;
};

ChiEstimate estimate_chi(const TopologySchedule& schedule, std::uint64_t horizon);
ChiEstimate estimate_chi(const GossipSequence& sequence, std::uint64_t horizon);

std::string edges_to_json(const EdgeSet& edges);
EdgeSet edges_from_json(const std::string& text);
void write_gossip_csv(std::ostream& out, const GossipMatrix& w);

}  // namespace adom

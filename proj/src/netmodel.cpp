#include "adom/netmodel.hpp"

#include "adom/numfmt.hpp"
#include "adom/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace adom {

namespace {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<int> parent_;
};

Eigen::MatrixXd laplacian(const EdgeSet& edges, int n) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : edges) {
    l(e.i, e.i) += 1.0;
    l(e.j, e.j) += 1.0;
    l(e.i, e.j) -= 1.0;
    l(e.j, e.i) -= 1.0;
  }
  return l;
}

// Orthonormal basis of the zero-sum subspace of R^n, as n x (n-1) columns.
Eigen::MatrixXd zero_sum_basis(int n) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Ones(n, 1));
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return q.rightCols(n - 1);
}

}  // namespace

EdgeSet normalize_edges(std::vector<Edge> edges) {
  for (auto& e : edges) {
    if (e.i == e.j) throw std::invalid_argument("self-loop at node " + std::to_string(e.i));
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

EdgeSet ring_edges(int n) {
  std::vector<Edge> out;
  for (int i = 0; i < n; ++i) out.push_back({i, (i + 1) % n});
  return normalize_edges(std::move(out));
}

EdgeSet star_edges(int n, int center) {
  std::vector<Edge> out;
  for (int i = 0; i < n; ++i)
    if (i != center) out.push_back({center, i});
  return normalize_edges(std::move(out));
}

EdgeSet complete_edges(int n) {
  std::vector<Edge> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.push_back({i, j});
  return out;
}

bool is_connected(const EdgeSet& edges, int n) {
  UnionFind uf(n);
  int components = n;
  for (const auto& e : edges)
    if (uf.unite(e.i, e.j)) --components;
  return components == 1;
}

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::RandomGeometricCycle: return "random_geometric_cycle";
    case TopologyKind::RingStarAlternate: return "ring_star_alternate";
    case TopologyKind::LowerBoundStar: return "lower_bound_star";
  }
  return "unknown";
}

TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "random_geometric_cycle") return TopologyKind::RandomGeometricCycle;
  if (s == "ring_star_alternate") return TopologyKind::RingStarAlternate;
  if (s == "lower_bound_star") return TopologyKind::LowerBoundStar;
  throw std::invalid_argument("unknown topology kind '" + s + "'");
}

TopologySchedule::TopologySchedule(TopologyKind kind, int n, std::vector<EdgeSet> cycle)
    : kind_(kind), n_(n), cycle_(std::move(cycle)) {
  if (cycle_.empty()) throw std::invalid_argument("schedule needs at least one edge set");
}

EdgeSet random_geometric_graph(int n, double radius, std::uint64_t seed, std::uint64_t graph_index) {
  const CounterRng rng(seed);
  std::vector<double> px(n), py(n);
  for (int v = 0; v < n; ++v) {
    px[v] = rng.uniform(graph_index, static_cast<std::uint64_t>(v), 0);
    py[v] = rng.uniform(graph_index, static_cast<std::uint64_t>(v), 1);
  }
  std::vector<Edge> edges;
  UnionFind uf(n);
  const double r2 = radius * radius;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = px[i] - px[j];
      const double dy = py[i] - py[j];
      if (dx * dx + dy * dy < r2) {
        edges.push_back({i, j});
        uf.unite(i, j);
      }
    }
  }
  for (int i = 0; i + 1 < n; ++i)
    if (uf.unite(i, i + 1)) edges.push_back({i, i + 1});
  return normalize_edges(std::move(edges));
}

int lower_bound_center(int n, std::uint64_t q) {
  const int group = n / 3;
  return group + static_cast<int>(q % static_cast<std::uint64_t>(group));
}

TopologySchedule build_schedule(TopologyKind kind, int n, const GeometricParams& params,
                                std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("schedule needs n >= 2, got " + std::to_string(n));
  std::vector<EdgeSet> cycle;
  switch (kind) {
    case TopologyKind::RandomGeometricCycle: {
      if (!(params.radius > 0.0 && params.radius <= std::sqrt(2.0)))
        throw std::invalid_argument("radius must lie in (0, sqrt(2)]");
      if (params.pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");
      for (int g = 0; g < params.pool_size; ++g)
        cycle.push_back(random_geometric_graph(n, params.radius, seed, static_cast<std::uint64_t>(g)));
      break;
    }
    case TopologyKind::RingStarAlternate:
      cycle.push_back(ring_edges(n));
      cycle.push_back(star_edges(n, 0));
      break;
    case TopologyKind::LowerBoundStar: {
      if (n % 3 != 0) throw std::invalid_argument("lower-bound star schedule needs n divisible by 3");
      for (int q = 0; q < n / 3; ++q) cycle.push_back(star_edges(n, lower_bound_center(n, q)));
      break;
    }
  }
  return TopologySchedule(kind, n, std::move(cycle));
}

void GossipMatrix::rebuild_rows() {
  const int size = n();
  rows.assign(size, {});
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      if (w(i, j) != 0.0) rows[i].emplace_back(j, w(i, j));
}

Spectrum symmetric_spectrum(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigenvalue solver failed");
  const auto& ev = solver.eigenvalues();
  Spectrum s;
  s.lambda_max = ev.maxCoeff();
  const double floor = 1e-9 * s.lambda_max;
  s.lambda_min_plus = s.lambda_max;
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev[k] > floor) s.lambda_min_plus = std::min(s.lambda_min_plus, ev[k]);
  return s;
}

GossipMatrix laplacian_gossip(const EdgeSet& edges, int n, std::uint64_t round) {
  for (const auto& e : edges)
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n || e.i == e.j)
      throw std::invalid_argument("edge out of range for n = " + std::to_string(n));
  if (!is_connected(edges, n)) throw std::invalid_argument("gossip graph is disconnected");
  GossipMatrix g;
  const Eigen::MatrixXd l = laplacian(edges, n);
  const Spectrum s = symmetric_spectrum(l);
  g.w = l / s.lambda_max;
  g.round = round;
  g.edges = edges;
  g.rebuild_rows();
  return g;
}

ValidationReport validate_gossip(const GossipMatrix& gm, const EdgeSet& edges, double chi,
                                 int samples, std::uint64_t seed) {
  ValidationReport rep;
  const Eigen::MatrixXd& w = gm.w;
  const int n = static_cast<int>(w.rows());
  if (w.cols() != n || n == 0) {
    rep.failures.push_back("matrix is not square");
    return rep;
  }

  std::vector<char> adjacent(static_cast<std::size_t>(n) * n, 0);
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) continue;
    adjacent[e.i * n + e.j] = adjacent[e.j * n + e.i] = 1;
  }
  rep.sparsity = true;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && w(i, j) != 0.0 && !adjacent[i * n + j]) {
        rep.sparsity = false;
        rep.failures.push_back("nonzero at non-edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }

  rep.max_kernel_residual = (w * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff();
  rep.kernel = rep.max_kernel_residual <= 1e-12;
  if (!rep.kernel) rep.failures.push_back("W*1 != 0, residual " + format_double(rep.max_kernel_residual));

  rep.max_range_residual = (Eigen::RowVectorXd::Ones(n) * w).cwiseAbs().maxCoeff();
  rep.range = rep.max_range_residual <= 1e-12;
  if (!rep.range) rep.failures.push_back("1^T*W != 0, residual " + format_double(rep.max_range_residual));

  const double bound = 1.0 - 1.0 / chi;
  // allowance for rounding when chi == 1 makes the bound exactly zero
  const double roundoff = 1e-13;
  rep.contraction = chi >= 1.0;
  if (chi < 1.0) rep.failures.push_back("chi must be >= 1");

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int s = 0; s < samples && n > 1; ++s) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = normal(gen);
    x.array() -= x.mean();
    const double lhs = (w * x - x).squaredNorm();
    const double rhs = x.squaredNorm();
    rep.worst_contraction_ratio = std::max(rep.worst_contraction_ratio, lhs / rhs);
    if (lhs > (bound + roundoff) * rhs) {
      rep.contraction = false;
      rep.failures.push_back("sampled contraction violated: ratio " + format_double(lhs / rhs) +
                             " > " + format_double(bound));
      break;
    }
  }

  if (n > 1 && w.isApprox(w.transpose(), 1e-14)) {
    // W restricted to the zero-sum subspace; every eigenvalue lambda needs (1 - lambda)^2 <= 1 - 1/chi
    rep.contraction_spectral_checked = true;
    const Eigen::MatrixXd basis = zero_sum_basis(n);
    const Eigen::MatrixXd restricted = basis.transpose() * w * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (restricted + restricted.transpose()),
                                                          Eigen::EigenvaluesOnly);
    const Eigen::VectorXd ev = solver.eigenvalues();
    double worst = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) worst = std::max(worst, (1.0 - ev[k]) * (1.0 - ev[k]));
    if (worst > bound + roundoff) {
      rep.contraction = false;
      rep.failures.push_back("spectral contraction violated: " + format_double(worst) + " > " +
                             format_double(bound));
    }
  }
  return rep;
}

GossipSequence::GossipSequence(TopologySchedule schedule) : schedule_(std::move(schedule)) {}

const GossipMatrix& GossipSequence::at(std::uint64_t q) const {
  const std::size_t slot = q % schedule_.period();
  std::lock_guard lock(mutex_);
  auto it = cache_.find(slot);
  if (it == cache_.end()) {
    auto g = std::make_unique<GossipMatrix>(laplacian_gossip(schedule_.edges(slot), schedule_.n(), slot));
    it = cache_.emplace(slot, std::move(g)).first;
  }
  return *it->second;
}

ChiEstimate estimate_chi(const GossipSequence& sequence, std::uint64_t horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  ChiEstimate est;
  std::map<std::size_t, double> seen;
  const std::size_t period = sequence.schedule().period();
  for (std::uint64_t q = 0; q < horizon; ++q) {
    const std::size_t slot = q % period;
    auto it = seen.find(slot);
    if (it == seen.end()) {
      it = seen.emplace(slot, symmetric_spectrum(sequence.at(q).w).ratio()).first;
    }
    est.per_round.push_back(it->second);
  }
  est.chi = std::max(1.0, *std::max_element(est.per_round.begin(), est.per_round.end()));
  return est;
}

ChiEstimate estimate_chi(const TopologySchedule& schedule, std::uint64_t horizon) {
  return estimate_chi(GossipSequence(schedule), horizon);
}

std::string edges_to_json(const EdgeSet& edges) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : edges) arr.push_back({e.i, e.j});
  return arr.dump();
}

EdgeSet edges_from_json(const std::string& text) {
  const auto arr = nlohmann::json::parse(text);
  std::vector<Edge> out;
  for (const auto& pair : arr) out.push_back({pair.at(0).get<int>(), pair.at(1).get<int>()});
  return normalize_edges(std::move(out));
}

void write_gossip_csv(std::ostream& out, const GossipMatrix& w) {
  for (Eigen::Index i = 0; i < w.w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.w.cols(); ++j) {
      if (j) out << ',';
      out << format_double(w.w(i, j));
    }
    out << '\n';
  }
}

}  // namespace adom

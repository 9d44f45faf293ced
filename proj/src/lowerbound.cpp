#include "adom/lowerbound.hpp"

#include "adom/numfmt.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace adom {

namespace {

NodeGroup group_for(int node, int n) {
  const int g = n / 3;
  if (node < g) return NodeGroup::Head;
  if (node < 2 * g) return NodeGroup::Relay;
  return NodeGroup::Tail;
}

// Adds w * [[1, -1], [-1, 1]] on coordinates (a, a+1).
void add_link(SymTridiagonal& h, int a, double w) {
  h.diag[a] += w;
  h.diag[a + 1] += w;
  h.off[a] -= w;
}

}  // namespace

NodeGroup HardInstance::group_of(int node) const { return group_for(node, n); }

double HardInstance::curve_constant() const { return std::pow(rho, 4) / (1.0 - rho * rho); }

TopologySchedule HardInstance::schedule() const { return build_schedule(TopologyKind::LowerBoundStar, n); }

double hard_rho(double L, double mu) {
  if (!(mu > 0.0) || !(L > mu)) throw std::invalid_argument("hard_rho: need L > mu > 0");
  const double s = std::sqrt(2.0 * L / (3.0 * mu) + 1.0 / 3.0);
  return (s - 1.0) / (s + 1.0);
}

bool rho_lower_estimate_holds(double L, double mu) {
  return hard_rho(L, mu) >= std::max(0.0, 1.0 - std::sqrt(6.0 * mu / L));
}

HardInstance build_hard_instance(double chi, double L, double mu, int d_trunc) {
  if (!(chi >= 3.0)) throw std::invalid_argument("hard instance needs chi >= 3");
  if (!(mu > 0.0) || !(L > mu)) throw std::invalid_argument("hard instance needs L > mu > 0");
  if (d_trunc < 4) throw std::invalid_argument("hard instance needs d_trunc >= 4");

  HardInstance inst;
  inst.chi = chi;
  inst.n = 3 * static_cast<int>(std::floor(chi / 3.0));
  inst.L = L;
  inst.mu = mu;
  inst.d_trunc = d_trunc;
  inst.rho = hard_rho(L, mu);

  // (L - mu)/4 * (a - b)^2 has Hessian (L - mu)/2 * [[1, -1], [-1, 1]]
  const double w = (L - mu) / 2.0;
  const int d = d_trunc;
  std::vector<QuadraticNode> nodes;
  nodes.reserve(inst.n);
  for (int i = 0; i < inst.n; ++i) {
    SymTridiagonal h{Eigen::VectorXd::Constant(d, mu), Eigen::VectorXd::Zero(d - 1)};
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    double constant = 0.0;
    switch (group_for(i, inst.n)) {
      case NodeGroup::Head:
        // (x_1 - 1)^2 plus links (x_2, x_3), (x_4, x_5), ... in one-based coordinates
        h.diag[0] += w;
        c[0] = -w;
        constant = (L - mu) / 4.0;
        for (int a = 1; a + 1 < d; a += 2) add_link(h, a, w);
        break;
      case NodeGroup::Relay:
        break;
      case NodeGroup::Tail:
        // links (x_1, x_2), (x_3, x_4), ...
        for (int a = 0; a + 1 < d; a += 2) add_link(h, a, w);
        break;
    }
    nodes.push_back(QuadraticNode{std::move(h), std::move(c), constant});
  }
  inst.objectives = LocalObjectiveSet::quadratic(std::move(nodes), L, mu);
  return inst;
}

Eigen::VectorXd hard_solution(double L, double mu, int d_trunc) {
  const double rho = hard_rho(L, mu);
  Eigen::VectorXd x(d_trunc);
  double p = 1.0;
  for (int l = 0; l < d_trunc; ++l) {
    p *= rho;
    x[l] = p;
  }
  return x;
}

SpanTracker::SpanTracker(int n) : s_(static_cast<std::size_t>(n), 0) {
  if (n < 3 || n % 3 != 0) throw std::invalid_argument("span tracker needs n divisible by 3");
}

NodeGroup SpanTracker::group_of(int node) const { return group_for(node, n()); }

void SpanTracker::compute() {
  for (int i = 0; i < n(); ++i) {
    switch (group_of(i)) {
      case NodeGroup::Head: s_[i] += 1 - (s_[i] % 2); break;
      case NodeGroup::Relay: break;
      case NodeGroup::Tail: s_[i] += s_[i] % 2; break;
    }
  }
}

void SpanTracker::communicate() {
  const int c = lower_bound_center(n(), q_);
  const int old_center = s_[c];
  const int global = *std::max_element(s_.begin(), s_.end());
  for (int i = 0; i < n(); ++i) s_[i] = i == c ? global : std::max(s_[i], old_center);
  ++q_;
}

int SpanTracker::lemma_bound(int node) const {
  const int g = n() / 3;
  const int base = 2 * static_cast<int>(q_ / static_cast<std::uint64_t>(g));
  const int c = lower_bound_center(n(), q_);
  const bool tight = group_of(node) == NodeGroup::Tail || (node >= c && node < 2 * g);
  return base + (tight ? 0 : 1);
}

int support_prefix(std::span<const double> x, double zero_threshold) {
  for (std::size_t l = x.size(); l > 0; --l)
    if (std::abs(x[l - 1]) > zero_threshold) return static_cast<int>(l);
  return 0;
}

CertReport certify_run(const std::vector<TraceEntry>& trace, const HardInstance& inst) {
  CertReport rep;
  rep.entries = trace.size();
  SpanTracker tracker(inst.n);
  const Eigen::VectorXd x_star = hard_solution(inst.L, inst.mu, inst.d_trunc);
  const double rho2 = inst.rho * inst.rho;
  const double slack = 2.0 * std::pow(inst.rho, 2.0 * inst.d_trunc) / (1.0 - rho2);

  for (std::size_t e = 0; e < trace.size(); ++e) {
    const TraceEntry& entry = trace[e];
    if (entry.x.n() != inst.n || entry.x.d() != inst.d_trunc)
      throw std::invalid_argument("certify_run: trace entry " + std::to_string(e) + " has the wrong shape");
    for (const RoundEvent& ev : entry.rounds) {
      if (ev.kind == RoundKind::Compute) {
        tracker.compute();
      } else {
        if (ev.q != tracker.comm_count())
          throw std::invalid_argument("certify_run: trace communication round " + std::to_string(ev.q) +
                                      " does not match schedule position " + std::to_string(tracker.comm_count()));
        tracker.communicate();
      }
    }
    bool prefix_ok = true;
    bool bound_ok = true;
    for (int i = 0; i < inst.n; ++i) {
      const int s = tracker.span(i);
      const int prefix = support_prefix(entry.x.block(i));
      if (prefix > s) {
        prefix_ok = false;
        if (!rep.first_violation)
          rep.first_violation = CertViolation{e, i, "prefix",
                                              "support prefix " + std::to_string(prefix) + " exceeds span " + std::to_string(s)};
      }
      const double dist = (entry.x.block_map(i) - x_star).squaredNorm();
      const double bound = std::pow(inst.rho, 2.0 * s + 2.0) / (1.0 - rho2) - slack;
      if (dist < bound) {
        bound_ok = false;
        if (!rep.first_violation)
          rep.first_violation = CertViolation{e, i, "distance",
                                              "||x_i - x*||^2 = " + format_double(dist) + " < " + format_double(bound)};
      }
    }
    rep.prefix_ok.push_back(prefix_ok);
    rep.bound_ok.push_back(bound_ok);
  }
  return rep;
}

std::vector<LowerBoundPoint> lower_bound_curve(double chi, double L, double mu, std::uint64_t q_max) {
  if (!(chi >= 3.0)) throw std::invalid_argument("lower_bound_curve needs chi >= 3");
  const double rho = hard_rho(L, mu);
  const double c = std::pow(rho, 4) / (1.0 - rho * rho);
  const double relaxed_base = std::max(0.0, 1.0 - 24.0 * std::sqrt(6.0 * mu / L));
  std::vector<LowerBoundPoint> out;
  out.reserve(q_max + 1);
  for (std::uint64_t q = 0; q <= q_max; ++q) {
    const double t = static_cast<double>(q) / chi;
    out.push_back({q, c * std::pow(rho, 24.0 * t), c * std::pow(relaxed_base, t)});
  }
  return out;
}

std::string to_json(const CertReport& rep, const std::vector<LowerBoundPoint>& curve) {
  nlohmann::json j;
  j["passed"] = rep.passed();
  j["entries"] = rep.entries;
  j["prefix_ok"] = rep.prefix_ok;
  j["bound_ok"] = rep.bound_ok;
  if (rep.first_violation) {
    const auto& v = *rep.first_violation;
    j["first_violation"] = {{"entry", v.entry}, {"node_label", v.node + 1}, {"check", v.check}, {"detail", v.detail}};
  } else {
    j["first_violation"] = nullptr;
  }
  nlohmann::json c = nlohmann::json::array();
  for (const auto& p : curve) c.push_back({{"q", p.q}, {"exact", p.exact}, {"relaxed", p.relaxed}});
  j["curve"] = std::move(c);
  return j.dump();
}

std::string curve_to_csv(const std::vector<LowerBoundPoint>& curve) {
  std::ostringstream out;
  out << "q,exact,relaxed\n";
  for (const auto& p : curve) out << p.q << ',' << format_double(p.exact) << ',' << format_double(p.relaxed) << '\n';
  return out.str();
}

}  // namespace adom

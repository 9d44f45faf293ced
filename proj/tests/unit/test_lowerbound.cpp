#include "adom/adomplus.hpp"
#include "adom/lowerbound.hpp"
#include "adom/random.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>

using namespace adom;

TEST_CASE("hard instance at chi = 9") {
  const HardInstance inst = build_hard_instance(9, 100.0, 1.0, 12);
  CHECK(inst.n == 9);
  CHECK(inst.group_size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(inst.group_of(i) == NodeGroup::Head);
  for (int i = 3; i < 6; ++i) CHECK(inst.group_of(i) == NodeGroup::Relay);
  for (int i = 6; i < 9; ++i) CHECK(inst.group_of(i) == NodeGroup::Tail);
  CHECK(inst.center_label(0) == 4);
  CHECK(inst.center_label(1) == 5);
  CHECK(inst.center_label(2) == 6);
  CHECK(inst.center_label(3) == 4);
  CHECK(build_hard_instance(10.5, 100.0, 1.0, 12).n == 9);
  CHECK(inst.objectives.verify_quadratic_constants());
}

TEST_CASE("per-round ratio of the n-star equals n, never above chi") {
  for (double chi : {3.0, 10.0, 31.0}) {
    const HardInstance inst = build_hard_instance(chi, 10.0, 1.0, 6);
    const auto est = estimate_chi(inst.schedule(), inst.schedule().period());
    CHECK(est.chi == doctest::Approx(static_cast<double>(inst.n)));
    CHECK(est.chi <= chi + 1e-9);
  }
}

TEST_CASE("relay nodes have gradient mu x") {
  const HardInstance inst = build_hard_instance(6, 50.0, 2.0, 8);
  Eigen::VectorXd x(8);
  for (int l = 0; l < 8; ++l) x[l] = std::sin(l + 1.0);
  CHECK((inst.objectives.grad_block(2, x) - 2.0 * x).norm() <= 1e-14);
  CHECK((inst.objectives.grad_block(3, x) - 2.0 * x).norm() <= 1e-14);
}

TEST_CASE("local functions written out directly") {
  const double L = 7.0, mu = 1.5;
  const HardInstance inst = build_hard_instance(3, L, mu, 6);
  Eigen::VectorXd x(6);
  x << 0.3, -1.2, 0.7, 2.0, -0.4, 1.1;
  const double w = (L - mu) / 4.0;
  const double sq = 0.5 * mu * x.squaredNorm();
  // head: (L-mu)/4 [(x1 - 1)^2 + (x2 - x3)^2 + (x4 - x5)^2], one-based
  const double head = sq + w * (std::pow(x[0] - 1, 2) + std::pow(x[1] - x[2], 2) + std::pow(x[3] - x[4], 2));
  // tail: (L-mu)/4 [(x1 - x2)^2 + (x3 - x4)^2 + (x5 - x6)^2]
  const double tail = sq + w * (std::pow(x[0] - x[1], 2) + std::pow(x[2] - x[3], 2) + std::pow(x[4] - x[5], 2));
  CHECK(inst.objectives.value_block(0, x) == doctest::Approx(head));
  CHECK(inst.objectives.value_block(1, x) == doctest::Approx(sq));
  CHECK(inst.objectives.value_block(2, x) == doctest::Approx(tail));
}

TEST_CASE("rho closed form") {
  CHECK(hard_rho(11.0, 2.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Eigen::VectorXd x = hard_solution(11.0, 2.0, 5);
  for (int l = 0; l < 5; ++l) CHECK(x[l] == doctest::Approx(std::pow(3.0, -(l + 1))));
  CHECK(hard_rho(1.0 + 1e-12, 1.0) < 1e-6);
  CHECK(hard_solution(1.0 + 1e-12, 1.0, 4).norm() < 1e-6);
  CHECK_THROWS_AS(hard_rho(1.0, 1.0), std::invalid_argument);
}

TEST_CASE("rho lower estimate over a grid of condition numbers") {
  for (double kappa = 1.01; kappa < 1e7; kappa *= 1.37) CHECK(rho_lower_estimate_holds(kappa, 1.0));
}

TEST_CASE("truncated rho^l solves the sum up to the tail residual") {
  for (int d : {20, 200}) {
    for (double kappa : {11.0 / 2.0, 10.0, 100.0}) {
      const HardInstance inst = build_hard_instance(9, kappa, 1.0, d);
      const Eigen::VectorXd x = hard_solution(kappa, 1.0, d);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
      for (int i = 0; i < inst.n; ++i) g += inst.objectives.grad_block(i, x);
      // plus a rounding allowance, which dominates once rho^d underflows the residual
      CHECK(g.norm() <= 3.0 * inst.n * kappa * std::pow(inst.rho, d) + 1e-12);
      if (d == 200) CHECK(g.norm() <= 1e-10);
      if (d == 20 && kappa == 100.0) CHECK(g.norm() > 1e-6);
    }
  }
}

TEST_CASE("hard instance argument checks") {
  CHECK_THROWS_AS(build_hard_instance(2.9, 10, 1, 10), std::invalid_argument);
  CHECK_THROWS_AS(build_hard_instance(9, 1, 1, 10), std::invalid_argument);
  CHECK_THROWS_AS(build_hard_instance(9, 10, 0, 10), std::invalid_argument);
  CHECK_THROWS_AS(build_hard_instance(9, 10, 1, 3), std::invalid_argument);
  CHECK_THROWS_AS(SpanTracker(10), std::invalid_argument);
}

TEST_CASE("span tracker computation rule") {
  SpanTracker t(9);
  t.compute();
  CHECK(t.span(0) == 1);  // head, s = 0 -> 1
  CHECK(t.span(4) == 0);  // relay unchanged
  CHECK(t.span(7) == 0);  // tail, s = 0 stays 0
  t.compute();
  CHECK(t.span(0) == 1);  // odd head prefix does not grow
}

TEST_CASE("span tracker communication rule") {
  SpanTracker t(9);
  t.compute();  // heads at 1
  const auto before = t.spans();
  t.communicate();  // center 3 had 0: leaves keep their values, the center takes the max
  CHECK(t.span(3) == 1);
  for (int i = 0; i < 9; ++i)
    if (i != 3) CHECK(t.span(i) == before[static_cast<std::size_t>(i)]);
  t.communicate();  // center 4 had 0 again
  CHECK(t.span(4) == 1);
  CHECK(t.span(7) == 0);
  t.communicate();  // center 5
  t.communicate();  // back to center 3, which holds 1: every leaf rises to 1
  for (int i = 0; i < 9; ++i) CHECK(t.span(i) == 1);
  CHECK(t.comm_count() == 4);

  SpanTracker flat(6);
  for (int r = 0; r < 5; ++r) flat.communicate();
  for (int s : flat.spans()) CHECK(s == 0);
}

TEST_CASE("span lemma holds on every compute/communicate pattern of 15 rounds") {
  // Consecutive computations are idempotent, so a pattern is a bit per round.
  const int n = 9;
  const int rounds = 15;
  for (std::uint32_t mask = 0; mask < (1u << rounds); ++mask) {
    SpanTracker t(n);
    bool ok = true;
    for (int r = 0; r < rounds && ok; ++r) {
      if (mask & (1u << r)) t.compute();
      for (int i = 0; i < n; ++i) ok = ok && t.span(i) <= t.lemma_bound(i);
      t.communicate();
      for (int i = 0; i < n; ++i) ok = ok && t.span(i) <= t.lemma_bound(i);
    }
    if (!ok) {
      FAIL("lemma violated for pattern " << mask);
      break;
    }
  }
}

TEST_CASE("max span grows by at most two per pass over the relay group") {
  const CounterRng rng(5);
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    SpanTracker t(9);
    int prev = 0;
    for (int pass = 0; pass < 17; ++pass) {  // 51 rounds
      for (int r = 0; r < 3; ++r) {
        if (rng.uniform(trial, static_cast<std::uint64_t>(pass * 3 + r)) < 0.6) t.compute();
        t.communicate();
      }
      const int mx = *std::max_element(t.spans().begin(), t.spans().end());
      CHECK(mx <= 2 * (pass + 1) + 1);
      CHECK(mx - prev <= 3);
      prev = mx;
    }
  }
}

TEST_CASE("support prefix") {
  const std::vector<double> v{0.5, 0.0, 1e-13, 2.0, 0.0, 1e-14};
  CHECK(support_prefix(v) == 4);
  CHECK(support_prefix(std::vector<double>(3, 0.0)) == 0);
}

namespace {

std::vector<TraceEntry> constant_trace(const DistVec& x, int iterations) {
  std::vector<TraceEntry> trace;
  trace.push_back({{}, x});
  for (int k = 0; k < iterations; ++k) {
    TraceEntry e;
    e.rounds.push_back({RoundKind::Compute, 0});
    e.rounds.push_back({RoundKind::Communicate, static_cast<std::uint64_t>(k)});
    e.x = x;
    trace.push_back(std::move(e));
  }
  return trace;
}

}  // namespace

TEST_CASE("certifier accepts the zero trace and rejects a forged one") {
  const HardInstance inst = build_hard_instance(9, 100.0, 1.0, 40);
  const auto zero = certify_run(constant_trace(DistVec(9, 40), 10), inst);
  CHECK(zero.passed());
  CHECK(zero.entries == 11);

  DistVec forged(9, 40);
  const Eigen::VectorXd x_star = hard_solution(100.0, 1.0, 40);
  for (int i = 0; i < 9; ++i) forged.block_map(i) = x_star;
  const auto bad = certify_run(constant_trace(forged, 0), inst);
  CHECK_FALSE(bad.passed());
  REQUIRE(bad.first_violation.has_value());
  CHECK(bad.first_violation->check == "prefix");
  CHECK(bad.first_violation->entry == 0);
  const auto j = nlohmann::json::parse(to_json(bad, {}));
  CHECK(j.at("first_violation").at("node_label") == 1);
  CHECK(j.at("passed") == false);
}

TEST_CASE("certifier input validation") {
  const HardInstance inst = build_hard_instance(9, 100.0, 1.0, 10);
  CHECK_THROWS_AS(certify_run(constant_trace(DistVec(9, 11), 1), inst), std::invalid_argument);
  std::vector<TraceEntry> skipped = constant_trace(DistVec(9, 10), 2);
  skipped[2].rounds[1].q = 5;
  CHECK_THROWS_AS(certify_run(skipped, inst), std::invalid_argument);
}

TEST_CASE("ADOM+ traces pass the certifier for T = 1 and T = 3") {
  const HardInstance inst = build_hard_instance(9, 100.0, 1.0, 60);
  const auto seq = std::make_shared<const GossipSequence>(inst.schedule());
  for (int t : {1, 3}) {
    const AdomPlusParams p = derive_params(100.0, 1.0, effective_chi(9.0, t));
    const SaddleReference ref = make_reference(inst.objectives, quadratic_minimizer(inst.objectives), p.nu);
    std::vector<TraceEntry> trace;
    RunOptions opts;
    opts.budget = 120;
    opts.observer = [&](const AdomPlusState& s) {
      TraceEntry e;
      if (s.k > 0) {
        e.rounds.push_back({RoundKind::Compute, 0});
        for (int r = 0; r < t; ++r)
          e.rounds.push_back({RoundKind::Communicate, (s.k - 1) * static_cast<std::uint64_t>(t) + r});
      }
      e.x = s.x;
      trace.push_back(std::move(e));
    };
    run(inst.objectives, Mixer(seq, t), p, ref, AdomPlusState::zeros(inst.n, 60), opts);
    const CertReport rep = certify_run(trace, inst);
    CHECK(rep.passed());
    CHECK(rep.entries == 121);
    // the error really is bounded away from zero early on
    CHECK((trace[10].x.block_map(8) - hard_solution(100.0, 1.0, 60)).squaredNorm() > 0.1);
  }
}

TEST_CASE("lower-bound curve") {
  const double L = 100.0, mu = 1.0;
  const auto curve = lower_bound_curve(9, L, mu, 40);
  const double rho = hard_rho(L, mu);
  const double c = std::pow(rho, 4) / (1 - rho * rho);
  CHECK(curve.size() == 41);
  CHECK(curve[0].exact == doctest::Approx(c));
  CHECK(curve[0].relaxed == doctest::Approx(c));
  // 24 sqrt(6 mu) >= sqrt(L): the relaxed form is clamped to zero
  CHECK(curve[1].relaxed == 0.0);
  for (std::size_t q = 0; q + 9 < curve.size(); ++q)
    CHECK(curve[q].exact / curve[q + 9].exact == doctest::Approx(std::pow(rho, -24)));
  const auto wide = lower_bound_curve(9, 1e6, 1.0, 10);
  CHECK(wide[9].relaxed == doctest::Approx(wide[0].relaxed * (1 - 24 * std::sqrt(6e-6))));
  CHECK(wide[5].relaxed <= wide[5].exact);
  CHECK(curve_to_csv(curve).rfind("q,exact,relaxed\n", 0) == 0);
}

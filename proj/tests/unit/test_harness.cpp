#include "adom/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace adom;

namespace {

const char* kQuadratic = R"({
  "problem": {"type": "quadratic", "n": 6, "d": 3, "L": 20, "mu": 1, "seed": 3},
  "topology": {"kind": "ring_star_alternate"},
  "stop": {"budget": 100}
})";

const char* kHard = R"({
  "problem": {"type": "hard_instance", "chi": 9, "L": 100, "mu": 1, "d_trunc": 30},
  "stop": {"budget": 60},
  "certify": true
})";

std::string csv_of(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  write_records_csv(out, records);
  return out.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config parsing and defaults") {
  const ExperimentConfig c = config_from_json(kQuadratic);
  CHECK(c.problem.type == ProblemType::Quadratic);
  CHECK(c.problem.n == 6);
  CHECK(c.topology.kind == TopologyKind::RingStarAlternate);
  CHECK(c.algorithm.consensus_steps == 1);
  CHECK(*c.stop.budget == 100);
  CHECK_FALSE(c.stop.target_eps.has_value());
  CHECK(c.output.path.empty());

  const ExperimentConfig back = config_from_json(to_json(c));
  CHECK(back.problem.L == c.problem.L);
  CHECK(back.topology.kind == c.topology.kind);
  CHECK(back.stop.budget == c.stop.budget);

  const ExperimentConfig h = config_from_json(kHard);
  CHECK(problem_nodes(h.problem) == 9);
  CHECK(schedule_for(h).kind() == TopologyKind::LowerBoundStar);
  const ExperimentConfig a = config_from_json(
      R"({"problem":{"type":"hard_instance"},"algorithm":{"T":"auto"},"stop":{"target_eps":1e-3}})");
  CHECK_FALSE(a.algorithm.consensus_steps.has_value());
}

TEST_CASE("config validation errors") {
  const auto bad = [](const char* text) { CHECK_THROWS(config_from_json(text)); };
  bad(R"({"problem":{"type":"quadratic"},"stop":{}})");
  bad(R"({"problem":{"type":"quadratic"},"stop":{"budget":5},"algorithm":{"T":0}})");
  bad(R"({"problem":{"type":"quadratic"},"stop":{"budget":5},"algorithm":{"T":"many"}})");
  bad(R"({"problem":{"type":"quadratic"},"stop":{"budget":5},"algorithm":{"param_overrides":{"eta":-1}}})");
  bad(R"({"problem":{"type":"quadratic"},"stop":{"budget":5},"algorithm":{"param_overrides":{"lr":1}}})");
  bad(R"({"problem":{"type":"quadratic"},"stop":{"budget":5},"certify":true})");
  bad(R"({"problem":{"type":"quadratic"},"stop":{"budget":5,"metric":"max"}})");
  bad(R"({"problem":{"type":"quadratic","L":1,"mu":1},"stop":{"budget":5}})");
  bad(R"({"problem":{"type":"ellipse"},"stop":{"budget":5}})");
  bad(R"({"problem":{"type":"hard_instance","chi":2},"stop":{"budget":5}})");
  bad(R"({"problem":{"type":"hard_instance"},"topology":{"kind":"ring_star_alternate"},"stop":{"budget":5},"certify":true})");
  bad(R"({"stop":{"budget":5}})");
  bad("not json");
}

TEST_CASE("budget-only run: one record per iteration plus the initial one") {
  const ExperimentResult r = run_experiment(config_from_json(kQuadratic));
  REQUIRE(r.records.size() == 101);
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    CHECK(r.records[k].k == k);
    CHECK(r.records[k].grad_calls == k);
    CHECK(r.records[k].comm_rounds == k);
    CHECK(r.records[k].err_sq_stacked >= 0.0);
    CHECK(r.records[k].err_sq_mean_block >= 0.0);
  }
  CHECK(r.summary.iterations == 100);
  CHECK(r.summary.comm_rounds == 100);
  CHECK(r.summary.grad_calls == 100);
  CHECK_FALSE(r.summary.reached_target);
  CHECK_FALSE(r.summary.certification.has_value());
}

TEST_CASE("metering with T = ceil(chi ln 2)") {
  ExperimentConfig c = config_from_json(kQuadratic);
  c.algorithm.consensus_steps.reset();
  c.stop.budget = 20;
  const ExperimentResult r = run_experiment(c);
  CHECK(r.summary.consensus_steps == optimal_consensus_steps(r.summary.chi));
  CHECK(r.summary.chi_eff == 2.0);
  CHECK(r.summary.comm_rounds == r.summary.iterations * static_cast<std::uint64_t>(r.summary.consensus_steps));
  CHECK(r.summary.grad_calls == r.summary.iterations);
}

TEST_CASE("target stops the run early") {
  ExperimentConfig c = config_from_json(kQuadratic);
  c.stop.budget.reset();
  c.stop.target_eps = 1e-4;
  c.stop.relative = true;
  const ExperimentResult r = run_experiment(c);
  CHECK(r.summary.reached_target);
  CHECK(r.summary.err_sq_stacked <= 1e-4 * prepare_experiment(c).reference.x.squared_norm());
}

TEST_CASE("certified hard-instance run attaches the verdict") {
  const ExperimentResult r = run_experiment(config_from_json(kHard));
  REQUIRE(r.summary.certification.has_value());
  CHECK(r.summary.certification->passed());
  CHECK(r.summary.certification->entries == 61);
  CHECK(r.summary.chi == doctest::Approx(9.0));
  CHECK(to_json(r.summary).find("\"certification\"") != std::string::npos);
}

TEST_CASE("declared chi") {
  ExperimentConfig c = config_from_json(kHard);
  c.topology.chi = 5.0;
  CHECK_THROWS(prepare_experiment(c));
  c.topology.chi = 12.0;
  const PreparedExperiment p = prepare_experiment(c);
  CHECK(p.chi == 12.0);
  CHECK(p.chi_measured == doctest::Approx(9.0));
  CHECK(p.params.sigma2 == derive_params(100.0, 1.0, 12.0).sigma2);
}

TEST_CASE("parameter overrides replace the derived values") {
  ExperimentConfig c = config_from_json(kQuadratic);
  c.algorithm.param_overrides = {{"gamma", 0.25}, {"zeta", 0.4}};
  const PreparedExperiment p = prepare_experiment(c);
  CHECK(p.params.gamma == 0.25);
  CHECK(p.params.zeta == 0.4);
  CHECK(p.params.eta == derive_params(20.0, 1.0, p.chi).eta);
}

TEST_CASE("errors carry config context") {
  ExperimentConfig c = config_from_json(kHard);
  c.topology.chi = 1.0;
  try {
    prepare_experiment(c);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("hard_instance") != std::string::npos);
  }
}

TEST_CASE("record output") {
  CHECK(csv_of({}) == std::string(kRecordCsvHeader) + "\n");
  const ExperimentResult r = run_experiment(config_from_json(kQuadratic));
  const std::vector<RunRecord> three(r.records.begin(), r.records.begin() + 3);
  CHECK(count_lines(csv_of(three)) == 4);
  std::ostringstream js;
  write_records_json(js, r.records);
  CHECK(records_from_json(js.str()) == r.records);
}

TEST_CASE("identical configs give identical bytes") {
  const ExperimentConfig c = config_from_json(R"({
    "problem": {"type": "synthetic_logistic", "n": 5, "m": 8, "d": 4, "kappa": 50, "seed": 2},
    "topology": {"kind": "random_geometric_cycle", "radius": 0.6, "pool_size": 7, "seed": 4},
    "stop": {"budget": 80}
  })");
  CHECK(csv_of(run_experiment(c).records) == csv_of(run_experiment(c).records));
}

TEST_CASE("output files and the directory override") {
  const auto dir = std::filesystem::temp_directory_path() / "adom_unit_harness";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = config_from_json(kQuadratic);
  c.stop.budget = 5;
  c.output.path = (dir / "a" / "records.csv").string();
  const ExperimentResult r = run_experiment(c);
  CHECK(slurp(r.summary.output_path) == csv_of(r.records));

  ::setenv("ADOM_OUTPUT_DIR", (dir / "override").c_str(), 1);
  c.output.format = OutputFormat::Json;
  c.output.path = "nested/records.json";
  const ExperimentResult j = run_experiment(c);
  ::unsetenv("ADOM_OUTPUT_DIR");
  CHECK(std::filesystem::path(j.summary.output_path) == dir / "override" / "records.json");
  CHECK(records_from_json(slurp(j.summary.output_path)) == j.records);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweeps") {
  const ExperimentConfig base = config_from_json(kQuadratic);
  SUBCASE("a singleton sweep is a plain run") {
    const auto rows = sweep(base, SweepAxis::T, {1.0});
    const ExperimentResult r = run_experiment(base);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].ok);
    CHECK(rows[0].iterations == r.summary.iterations);
    CHECK(rows[0].comm_rounds == r.summary.comm_rounds);
    CHECK(rows[0].final_error == r.summary.err_sq_stacked);
  }
  SUBCASE("failed entries are marked and the rest still run") {
    const auto rows = sweep(base, SweepAxis::T, {2.0, 0.5, 3.0}, 2);
    CHECK(rows[0].ok);
    CHECK_FALSE(rows[1].ok);
    CHECK_FALSE(rows[1].error.empty());
    CHECK(rows[2].ok);
    CHECK(rows[2].comm_rounds == 300);
    std::ostringstream out;
    write_sweep_csv(out, SweepAxis::T, rows);
    CHECK(count_lines(out.str()) == 4);
  }
  SUBCASE("chi sweeps need the hard-instance family") {
    const auto rows = sweep(base, SweepAxis::Chi, {9.0});
    CHECK_FALSE(rows[0].ok);
  }
  SUBCASE("kappa entries rescale L and keep separate output files") {
    ExperimentConfig c = base;
    c.output.path = "out/run.csv";
    const ExperimentConfig e = sweep_entry(c, SweepAxis::Kappa, 40.0);
    CHECK(e.problem.L == 40.0);
    CHECK(e.output.path == "out/run_kappa40.csv");
  }
  CHECK_THROWS(sweep(base, SweepAxis::T, {}));
  CHECK(sweep_axis_from_string("kappa") == SweepAxis::Kappa);
  CHECK_THROWS(sweep_axis_from_string("eps"));
}

#include "adom/adomplus.hpp"

#include "adom/numfmt.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace adom {

void AdomPlusParams::validate() const {
  const double fields[] = {tau1, tau2, eta, alpha, nu, beta, sigma1, sigma2, theta, gamma, delta, zeta};
  for (double f : fields)
    if (!(f > 0.0) || !std::isfinite(f)) throw std::invalid_argument("ADOM+ parameters must be positive and finite");
}

AdomPlusParams derive_params(double L, double mu, double chi) {
  if (!(mu > 0.0)) throw std::invalid_argument("derive_params: mu must be positive");
  if (!(L > mu)) throw std::invalid_argument("derive_params: need L > mu");
  if (!(chi >= 1.0)) throw std::invalid_argument("derive_params: need chi >= 1");
  AdomPlusParams p;
  p.tau2 = std::sqrt(mu / L);
  p.tau1 = 1.0 / (1.0 / p.tau2 + 0.5);
  p.eta = 1.0 / (L * p.tau2);
  p.alpha = mu / 2.0;
  p.nu = mu / 2.0;
  p.beta = 1.0 / (2.0 * L);
  p.sigma2 = std::sqrt(mu) / (16.0 * chi * std::sqrt(L));
  p.sigma1 = 1.0 / (1.0 / p.sigma2 + 0.5);
  p.zeta = 0.5;
  p.delta = 1.0 / (17.0 * L);
  p.gamma = p.nu / (14.0 * p.sigma2 * chi * chi);
  p.theta = p.nu / (4.0 * p.sigma2);
  return p;
}

int optimal_consensus_steps(double chi) {
  if (!(chi >= 1.0)) throw std::invalid_argument("chi must be >= 1");
  return std::max(1, static_cast<int>(std::ceil(chi * std::log(2.0))));
}

double effective_chi(double chi, int t) {
  if (t < 1) throw std::invalid_argument("T must be >= 1");
  if (t == 1) return chi;
  if (t >= optimal_consensus_steps(chi)) return 2.0;
  const double contraction = std::pow(1.0 - 1.0 / chi, t);
  return 1.0 / (1.0 - contraction);
}

AdomPlusState AdomPlusState::initial(DistVec x0, DistVec y0, DistVec z0, DistVec m0) {
  if (!in_zero_sum_space(z0)) throw std::invalid_argument("initial z must have zero block sum");
  AdomPlusState s;
  s.x_f = x0;
  s.y_f = y0;
  s.z_f = z0;
  s.x = std::move(x0);
  s.y = std::move(y0);
  s.z = std::move(z0);
  s.m = std::move(m0);
  return s;
}

AdomPlusState AdomPlusState::zeros(int n, int d) {
  return initial(DistVec(n, d), DistVec(n, d), DistVec(n, d), DistVec(n, d));
}

Mixer::Mixer(std::shared_ptr<const GossipSequence> sequence, int consensus_steps)
    : sequence_(std::move(sequence)), t_(consensus_steps) {
  if (!sequence_) throw std::invalid_argument("Mixer needs a gossip sequence");
  if (t_ < 1) throw std::invalid_argument("Mixer needs T >= 1");
}

std::vector<DistVec> Mixer::apply(std::uint64_t k, const std::vector<DistVec>& payloads) const {
  return multi_mix(*sequence_, k, t_, payloads);
}

namespace {

void guard(const AdomPlusState& s) {
  const DistVec* fields[] = {&s.x, &s.y, &s.z, &s.m, &s.x_f, &s.y_f, &s.z_f};
  for (const DistVec* f : fields) {
    if (!f->all_finite() || f->max_abs() > 1e100)
      throw DivergenceError(s.k, "ADOM+ diverged at iteration " + std::to_string(s.k) +
                                     " (coordinate magnitude above 1e100 or non-finite)");
  }
}

}  // namespace

AdomPlusState step(const AdomPlusState& s, const AdomPlusParams& p, const LocalObjectiveSet& objectives,
                   const Mixer& mixer, StepIntermediates* intermediates) {
  if (s.x.n() != objectives.n() || s.x.d() != objectives.d() || mixer.n() != objectives.n())
    throw std::invalid_argument("step: state, objectives and mixer disagree on shape");

  DistVec x_g = lincomb(p.tau1, s.x, 1.0 - p.tau1, s.x_f);
  DistVec y_g = lincomb(p.sigma1, s.y, 1.0 - p.sigma1, s.y_f);
  DistVec z_g = lincomb(p.sigma1, s.z, 1.0 - p.sigma1, s.z_f);

  // g = grad F(x_g) - nu x_g
  DistVec g = objectives.grad_F(x_g);
  g.axpy(-p.nu, x_g);

  // x+ (1 + eta alpha) = a + eta y+,  a = x + eta alpha x_g - eta g
  DistVec a = s.x;
  a.axpy(p.eta * p.alpha, x_g).axpy(-p.eta, g);
  const double x_scale = 1.0 / (1.0 + p.eta * p.alpha);

  DistVec yz_g = y_g + z_g;

  // y+ (1 + theta beta + theta eta x_scale) = y + theta beta g - theta/nu (y_g + z_g) - theta x_scale a
  AdomPlusState out;
  out.y = s.y;
  out.y.axpy(p.theta * p.beta, g).axpy(-p.theta / p.nu, yz_g).axpy(-p.theta * x_scale, a);
  out.y *= 1.0 / (1.0 + p.theta * p.beta + p.theta * p.eta * x_scale);

  out.x = std::move(a);
  out.x.axpy(p.eta, out.y) *= x_scale;

  out.x_f = x_g;
  out.x_f.axpy(p.tau2, out.x).axpy(-p.tau2, s.x);
  out.y_f = y_g;
  out.y_f.axpy(p.sigma2, out.y).axpy(-p.sigma2, s.y);

  DistVec u = s.m;
  u.axpy(p.gamma / p.nu, yz_g);
  const auto mixed = mixer.apply(s.k, {u, yz_g});
  const DistVec& w_u = mixed[0];
  const DistVec& w_yz = mixed[1];

  out.z = s.z;
  out.z.axpy(p.gamma * p.delta, z_g).axpy(-p.gamma * p.delta, s.z) -= w_u;
  out.m = std::move(u);
  out.m -= w_u;
  out.z_f = z_g;
  out.z_f.axpy(-p.zeta, w_yz);

  out.k = s.k + 1;
  out.grad_calls = s.grad_calls + 1;
  out.comm_rounds = s.comm_rounds + static_cast<std::uint64_t>(mixer.consensus_steps());
  guard(out);

  if (intermediates) {
    intermediates->x_g = std::move(x_g);
    intermediates->y_g = std::move(y_g);
    intermediates->z_g = std::move(z_g);
  }
  return out;
}

SaddleReference make_reference(const LocalObjectiveSet& objectives, const Eigen::VectorXd& x_block, double nu) {
  if (x_block.size() != objectives.d()) throw std::invalid_argument("make_reference: dimension mismatch");
  SaddleReference r;
  r.x_block = x_block;
  r.x = DistVec::consensus(objectives.n(), x_block);
  r.y = objectives.grad_F(r.x);
  r.y.axpy(-nu, r.x);
  DistVec z_raw = lincomb(-nu, r.x, -1.0, r.y);
  const double scale = 1.0 + std::sqrt(z_raw.squared_norm());
  if (z_raw.block_sum().norm() > 1e-8 * scale)
    throw std::invalid_argument("make_reference: sum of local gradients at x* is not zero (residual " +
                                format_double(z_raw.block_sum().norm()) + ")");
  r.z = project_consensus(z_raw);
  if (consensus_gap(r.y + r.z) > 1e-8 * scale * scale)
    throw std::invalid_argument("make_reference: y* + z* is not a consensus vector");
  return r;
}

LyapunovReport lyapunov(const AdomPlusState& s, const AdomPlusParams& p, const LocalObjectiveSet& objectives,
                        const SaddleReference& ref) {
  LyapunovReport r;
  r.dist_x = (s.x - ref.x).squared_norm();
  const DistVec dxf = s.x_f - ref.x;
  r.bregman_gap = objectives.bregman_F(s.x_f, ref.x) - 0.5 * p.nu * dxf.squared_norm();
  r.psi_x = (1.0 / p.eta + p.alpha) * r.dist_x + (2.0 / p.tau2) * r.bregman_gap;

  r.dist_y = (s.y - ref.y).squared_norm();
  r.dist_y_f = (s.y_f - ref.y).squared_norm();
  const DistVec pm = project_consensus(s.m);
  r.momentum = pm.squared_norm();
  DistVec z_hat = s.z - pm;
  r.dist_z_hat = (z_hat - ref.z).squared_norm();
  DistVec coupled = s.y_f + s.z_f;
  coupled -= ref.y;
  coupled -= ref.z;
  r.coupled = coupled.squared_norm();

  r.psi_yz = (1.0 / p.theta + p.beta / 2.0) * r.dist_y + p.beta / (2.0 * p.sigma2) * r.dist_y_f +
             r.dist_z_hat / p.gamma + 4.0 / (3.0 * p.gamma) * r.momentum + r.coupled / (p.nu * p.sigma2);
  return r;
}

double lyapunov_rate(double L, double mu, double chi) { return 1.0 - std::sqrt(mu) / (32.0 * chi * std::sqrt(L)); }

RunRecord make_record(const AdomPlusState& s, const AdomPlusParams& p, const LocalObjectiveSet& objectives,
                      const SaddleReference& ref) {
  RunRecord rec;
  rec.k = s.k;
  rec.comm_rounds = s.comm_rounds;
  rec.grad_calls = s.grad_calls;
  rec.err_sq_stacked = (s.x - ref.x).squared_norm();
  rec.err_sq_mean_block = (s.x.mean_block() - ref.x_block).squaredNorm();
  const LyapunovReport lr = lyapunov(s, p, objectives, ref);
  rec.psi_x = lr.psi_x;
  rec.psi_yz = lr.psi_yz;
  return rec;
}

RunResult run(const LocalObjectiveSet& objectives, const Mixer& mixer, const AdomPlusParams& params,
              const SaddleReference& reference, AdomPlusState initial, const RunOptions& options) {
  params.validate();
  const double norm_sq = options.metric == ErrorMetric::Stacked ? reference.x.squared_norm()
                                                                : reference.x_block.squaredNorm();
  const double denom = options.relative ? norm_sq : 1.0;
  if (options.relative && !(denom > 0.0))
    throw std::invalid_argument("relative error requested but x* = 0");

  auto reached = [&](const RunRecord& rec) {
    if (!options.target_eps) return false;
    const double err = options.metric == ErrorMetric::Stacked ? rec.err_sq_stacked : rec.err_sq_mean_block;
    return err / denom <= *options.target_eps;
  };

  RunResult result;
  AdomPlusState state = std::move(initial);
  if (options.observer) options.observer(state);
  result.records.push_back(make_record(state, params, objectives, reference));
  result.reached_target = reached(result.records.back());
  while (!result.reached_target && state.k < options.budget) {
    state = step(state, params, objectives, mixer);
    if (options.observer) options.observer(state);
    result.records.push_back(make_record(state, params, objectives, reference));
    result.reached_target = reached(result.records.back());
  }
  result.final_state = std::move(state);
  return result;
}

std::string to_json(const AdomPlusParams& p) {
  nlohmann::json j{{"tau1", p.tau1}, {"tau2", p.tau2},     {"eta", p.eta},       {"alpha", p.alpha},
                   {"nu", p.nu},     {"beta", p.beta},     {"sigma1", p.sigma1}, {"sigma2", p.sigma2},
                   {"theta", p.theta}, {"gamma", p.gamma}, {"delta", p.delta},   {"zeta", p.zeta}};
  return j.dump();
}

namespace {

AdomPlusParams params_from_json(const nlohmann::json& j) {
  AdomPlusParams p;
  p.tau1 = j.at("tau1");
  p.tau2 = j.at("tau2");
  p.eta = j.at("eta");
  p.alpha = j.at("alpha");
  p.nu = j.at("nu");
  p.beta = j.at("beta");
  p.sigma1 = j.at("sigma1");
  p.sigma2 = j.at("sigma2");
  p.theta = j.at("theta");
  p.gamma = j.at("gamma");
  p.delta = j.at("delta");
  p.zeta = j.at("zeta");
  return p;
}

constexpr const char* kFieldNames[] = {"x", "y", "z", "m", "x_f", "y_f", "z_f"};

std::vector<DistVec*> fields_of(AdomPlusState& s) { return {&s.x, &s.y, &s.z, &s.m, &s.x_f, &s.y_f, &s.z_f}; }

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const AdomPlusState& state, const AdomPlusParams& params,
                     double chi_eff) {
  std::filesystem::create_directories(dir);
  nlohmann::json header{{"k", state.k},
                        {"comm_rounds", state.comm_rounds},
                        {"grad_calls", state.grad_calls},
                        {"n", state.x.n()},
                        {"d", state.x.d()},
                        {"chi_eff", chi_eff},
                        {"params", nlohmann::json::parse(to_json(params))}};
  std::ofstream(dir / "header.json") << header.dump(2) << '\n';
  auto copy = state;
  const auto fields = fields_of(copy);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    std::ofstream out(dir / (std::string(kFieldNames[f]) + ".bin"), std::ios::binary);
    write_binary(out, *fields[f]);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw std::runtime_error("checkpoint header not found in " + dir.string());
  nlohmann::json header;
  in >> header;
  Checkpoint c;
  c.state.k = header.at("k");
  c.state.comm_rounds = header.at("comm_rounds");
  c.state.grad_calls = header.at("grad_calls");
  c.chi_eff = header.at("chi_eff");
  c.params = params_from_json(header.at("params"));
  const int n = header.at("n");
  const int d = header.at("d");
  const auto fields = fields_of(c.state);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    std::ifstream bin(dir / (std::string(kFieldNames[f]) + ".bin"), std::ios::binary);
    if (!bin) throw std::runtime_error(std::string("checkpoint field missing: ") + kFieldNames[f]);
    *fields[f] = read_binary(bin, n, d);
  }
  return c;
}

}  // namespace adom

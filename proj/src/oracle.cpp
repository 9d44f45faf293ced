#include "adom/oracle.hpp"

#include "adom/numfmt.hpp"
#include "adom/random.hpp"

#include <json.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace adom {

namespace {

// log(1 + exp(-t)) without overflow
double softplus_neg(double t) { return t > 0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t)); }

// 1 / (1 + exp(-z))
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

Eigen::VectorXd SymTridiagonal::apply(const Eigen::VectorXd& x) const {
  const Eigen::Index d = diag.size();
  Eigen::VectorXd y = diag.cwiseProduct(x);
  for (Eigen::Index l = 0; l + 1 < d; ++l) {
    y[l] += off[l] * x[l + 1];
    y[l + 1] += off[l] * x[l];
  }
  return y;
}

Eigen::VectorXd SymTridiagonal::solve(const Eigen::VectorXd& rhs) const {
  // Thomas algorithm; stable here because every Hessian is diagonally dominant
  const Eigen::Index d = diag.size();
  Eigen::VectorXd c(d), g(d);
  double denom = diag[0];
  if (denom == 0.0) throw std::runtime_error("singular tridiagonal system");
  c[0] = d > 1 ? off[0] / denom : 0.0;
  g[0] = rhs[0] / denom;
  for (Eigen::Index l = 1; l < d; ++l) {
    denom = diag[l] - off[l - 1] * c[l - 1];
    if (denom == 0.0) throw std::runtime_error("singular tridiagonal system");
    c[l] = l + 1 < d ? off[l] / denom : 0.0;
    g[l] = (rhs[l] - off[l - 1] * g[l - 1]) / denom;
  }
  Eigen::VectorXd x(d);
  x[d - 1] = g[d - 1];
  for (Eigen::Index l = d - 2; l >= 0; --l) x[l] = g[l] - c[l] * x[l + 1];
  return x;
}

Eigen::MatrixXd SymTridiagonal::dense() const {
  const Eigen::Index d = diag.size();
  Eigen::MatrixXd m = diag.asDiagonal();
  for (Eigen::Index l = 0; l + 1 < d; ++l) m(l, l + 1) = m(l + 1, l) = off[l];
  return m;
}

Eigen::MatrixXd QuadraticNode::dense_hessian() const {
  if (const auto* m = std::get_if<Eigen::MatrixXd>(&hessian)) return *m;
  return std::get<SymTridiagonal>(hessian).dense();
}

namespace {

Eigen::VectorXd hessian_apply(const QuadraticNode& q, const Eigen::VectorXd& x) {
  if (const auto* m = std::get_if<Eigen::MatrixXd>(&q.hessian)) return *m * x;
  return std::get<SymTridiagonal>(q.hessian).apply(x);
}

}  // namespace

LocalObjectiveSet LocalObjectiveSet::logistic(std::vector<LogisticNode> nodes, double reg,
                                              double smoothness, double strong_convexity) {
  if (nodes.empty()) throw std::invalid_argument("objective set needs at least one node");
  if (!(reg > 0)) throw std::invalid_argument("logistic regularization must be positive");
  LocalObjectiveSet s;
  s.kind_ = ObjectiveKind::Logistic;
  s.n_ = static_cast<int>(nodes.size());
  s.d_ = static_cast<int>(nodes.front().features.cols());
  for (const auto& node : nodes) {
    if (node.features.cols() != s.d_ || node.labels.size() != node.features.rows() || node.labels.size() == 0)
      throw std::invalid_argument("inconsistent logistic node shapes");
  }
  s.reg_ = reg;
  s.smoothness_ = smoothness;
  s.strong_convexity_ = strong_convexity;
  s.logistic_ = std::move(nodes);
  return s;
}

LocalObjectiveSet LocalObjectiveSet::quadratic(std::vector<QuadraticNode> nodes, double smoothness,
                                               double strong_convexity) {
  if (nodes.empty()) throw std::invalid_argument("objective set needs at least one node");
  LocalObjectiveSet s;
  s.kind_ = ObjectiveKind::Quadratic;
  s.n_ = static_cast<int>(nodes.size());
  s.d_ = static_cast<int>(nodes.front().linear.size());
  for (const auto& node : nodes) {
    const Eigen::Index size = std::visit([](const auto& h) -> Eigen::Index {
      if constexpr (std::is_same_v<std::decay_t<decltype(h)>, Eigen::MatrixXd>) return h.rows();
      else return h.size();
    }, node.hessian);
    if (size != s.d_ || node.linear.size() != s.d_) throw std::invalid_argument("inconsistent quadratic node shapes");
  }
  s.smoothness_ = smoothness;
  s.strong_convexity_ = strong_convexity;
  s.quadratic_ = std::move(nodes);
  return s;
}

double LocalObjectiveSet::value_block(int i, const Eigen::VectorXd& x) const {
  if (kind_ == ObjectiveKind::Quadratic) {
    const auto& q = quadratic_[i];
    return 0.5 * x.dot(hessian_apply(q, x)) + q.linear.dot(x) + q.constant;
  }
  const auto& node = logistic_[i];
  const Eigen::VectorXd margins = node.labels.cwiseProduct(node.features * x);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < margins.size(); ++j) loss += softplus_neg(margins[j]);
  return loss / static_cast<double>(margins.size()) + 0.5 * reg_ * x.squaredNorm();
}

Eigen::VectorXd LocalObjectiveSet::grad_block(int i, const Eigen::VectorXd& x) const {
  if (x.size() != d_) throw std::invalid_argument("grad_block: dimension mismatch");
  if (kind_ == ObjectiveKind::Quadratic) {
    const auto& q = quadratic_[i];
    return hessian_apply(q, x) + q.linear;
  }
  const auto& node = logistic_[i];
  const Eigen::Index m = node.labels.size();
  const Eigen::VectorXd margins = node.labels.cwiseProduct(node.features * x);
  Eigen::VectorXd weights(m);
  for (Eigen::Index j = 0; j < m; ++j) weights[j] = -node.labels[j] * sigmoid(-margins[j]);
  return node.features.transpose() * weights / static_cast<double>(m) + reg_ * x;
}

Eigen::VectorXd LocalObjectiveSet::dual_grad_block(int i, const Eigen::VectorXd& y) const {
  if (kind_ != ObjectiveKind::Quadratic)
    throw UnsupportedOracle("dual gradient oracle is only available for quadratic objectives");
  const auto& q = quadratic_[i];
  const Eigen::VectorXd rhs = y - q.linear;
  if (const auto* m = std::get_if<Eigen::MatrixXd>(&q.hessian)) {
    Eigen::LLT<Eigen::MatrixXd> llt(*m);
    if (llt.info() != Eigen::Success) throw std::runtime_error("dual gradient: Hessian is not positive definite");
    return llt.solve(rhs);
  }
  return std::get<SymTridiagonal>(q.hessian).solve(rhs);
}

double LocalObjectiveSet::bregman_block(int i, const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  if (kind_ == ObjectiveKind::Quadratic) {
    const Eigen::VectorXd delta = x - y;
    return 0.5 * delta.dot(hessian_apply(quadratic_[i], delta));
  }
  return value_block(i, x) - value_block(i, y) - grad_block(i, y).dot(x - y);
}

double LocalObjectiveSet::value_F(const DistVec& x) const {
  double total = 0.0;
  for (int i = 0; i < n_; ++i) total += value_block(i, x.block_map(i));
  return total;
}

DistVec LocalObjectiveSet::grad_F(const DistVec& x) const {
  if (x.n() != n_ || x.d() != d_) throw std::invalid_argument("grad_F: DistVec shape mismatch");
  DistVec g(n_, d_);
  for (int i = 0; i < n_; ++i) g.block_map(i) = grad_block(i, x.block_map(i));
  return g;
}

double LocalObjectiveSet::bregman_F(const DistVec& x, const DistVec& y) const {
  double total = 0.0;
  for (int i = 0; i < n_; ++i) total += bregman_block(i, x.block_map(i), y.block_map(i));
  return total;
}

bool LocalObjectiveSet::verify_quadratic_constants(double tol) const {
  if (kind_ != ObjectiveKind::Quadratic) return true;
  for (const auto& q : quadratic_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(q.dense_hessian(), Eigen::EigenvaluesOnly);
    const auto& ev = solver.eigenvalues();
    if (ev.minCoeff() < strong_convexity_ - tol || ev.maxCoeff() > smoothness_ + tol) return false;
  }
  return true;
}

LocalObjectiveSet gen_synthetic_logistic(int n, int m, int d, std::uint64_t seed, double kappa_target) {
  if (n < 1 || m < 1 || d < 1) throw std::invalid_argument("n, m, d must be >= 1");
  if (!(kappa_target > 1.0)) throw std::invalid_argument("kappa_target must exceed 1");
  const CounterRng rng(seed);
  // streams: 0 planted direction, 1 features, 2 label flips
  Eigen::VectorXd planted(d);
  for (int l = 0; l < d; ++l) planted[l] = rng.normal(0, static_cast<std::uint64_t>(l));
  planted.normalize();

  std::vector<LogisticNode> nodes(n);
  double l_data = 0.0;
  for (int i = 0; i < n; ++i) {
    auto& node = nodes[i];
    node.features.resize(m, d);
    node.labels.resize(m);
    for (int j = 0; j < m; ++j) {
      const std::uint64_t sample = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(m) + j;
      for (int l = 0; l < d; ++l) node.features(j, l) = rng.normal(1, sample, static_cast<std::uint64_t>(l));
      double label = node.features.row(j).dot(planted) >= 0.0 ? 1.0 : -1.0;
      if (rng.uniform(2, sample) < 0.05) label = -label;
      node.labels[j] = label;
    }
    const Eigen::MatrixXd gram = node.features.transpose() * node.features;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    l_data = std::max(l_data, solver.eigenvalues().maxCoeff() / (4.0 * m));
  }
  const double reg = l_data / (kappa_target - 1.0);
  return LocalObjectiveSet::logistic(std::move(nodes), reg, l_data + reg, reg);
}

LocalObjectiveSet gen_random_quadratic(int n, int d, double smoothness, double strong_convexity,
                                       std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("n, d must be >= 1");
  if (!(smoothness >= strong_convexity && strong_convexity > 0))
    throw std::invalid_argument("need L >= mu > 0");
  const CounterRng rng(seed);
  std::vector<QuadraticNode> nodes(n);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd g(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        g(r, c) = rng.normal(0, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(r * d + c));
    const Eigen::MatrixXd u = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd spectrum(d);
    for (int l = 0; l < d; ++l) {
      const double t = d == 1 ? 0.0 : static_cast<double>(l) / (d - 1);
      spectrum[l] = strong_convexity + t * (smoothness - strong_convexity);
    }
    Eigen::MatrixXd q = u * spectrum.asDiagonal() * u.transpose();
    q = 0.5 * (q + q.transpose());
    Eigen::VectorXd c(d);
    for (int l = 0; l < d; ++l) c[l] = rng.normal(1, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(l));
    nodes[i] = QuadraticNode{std::move(q), std::move(c), 0.0};
  }
  return LocalObjectiveSet::quadratic(std::move(nodes), smoothness, strong_convexity);
}

ReferenceSolution reference_minimizer(const LocalObjectiveSet& objectives, double tol,
                                      std::uint64_t max_iterations) {
  if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
  const int n = objectives.n();
  const double smooth = objectives.L();
  const double sc = objectives.mu();
  const double momentum = (std::sqrt(smooth) - std::sqrt(sc)) / (std::sqrt(smooth) + std::sqrt(sc));

  auto avg_grad = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(objectives.d());
    for (int i = 0; i < n; ++i) g += objectives.grad_block(i, x);
    return Eigen::VectorXd(g / static_cast<double>(n));
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(objectives.d());
  Eigen::VectorXd x_prev = x;
  ReferenceSolution out;
  for (std::uint64_t it = 0; it <= max_iterations; ++it) {
    const Eigen::VectorXd gx = avg_grad(x);
    const double gn = gx.norm();
    if (gn <= tol) {
      out.x = x;
      out.grad_norm = gn;
      out.iterations = it;
      return out;
    }
    const Eigen::VectorXd y = x + momentum * (x - x_prev);
    x_prev = x;
    x = y - avg_grad(y) / smooth;
  }
  throw std::runtime_error("reference_minimizer: iteration cap exceeded before reaching tol " + format_double(tol));
}

Eigen::VectorXd quadratic_minimizer(const LocalObjectiveSet& objectives) {
  if (objectives.kind() != ObjectiveKind::Quadratic)
    throw UnsupportedOracle("quadratic_minimizer needs quadratic objectives");
  const int d = objectives.d();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
  for (const auto& q : objectives.quadratic_nodes()) {
    h += q.dense_hessian();
    c += q.linear;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) throw std::runtime_error("quadratic_minimizer: Hessian not positive definite");
  return llt.solve(-c);
}

std::string to_json(const LocalObjectiveSet& s) {
  nlohmann::json j;
  j["n"] = s.n();
  j["d"] = s.d();
  j["L"] = s.L();
  j["mu"] = s.mu();
  nlohmann::json nodes = nlohmann::json::array();
  if (s.kind() == ObjectiveKind::Logistic) {
    j["kind"] = "logistic";
    j["reg"] = s.reg();
    for (const auto& node : s.logistic_nodes()) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < node.features.rows(); ++r) rows.push_back(to_std(node.features.row(r).transpose()));
      nodes.push_back({{"features", std::move(rows)}, {"labels", to_std(node.labels)}});
    }
  } else {
    j["kind"] = "quadratic";
    for (const auto& node : s.quadratic_nodes()) {
      nlohmann::json entry{{"linear", to_std(node.linear)}, {"constant", node.constant}};
      if (const auto* t = std::get_if<SymTridiagonal>(&node.hessian)) {
        entry["tridiagonal"] = {{"diag", to_std(t->diag)}, {"off", to_std(t->off)}};
      } else {
        const auto& m = std::get<Eigen::MatrixXd>(node.hessian);
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_std(m.row(r).transpose()));
        entry["dense"] = std::move(rows);
      }
      nodes.push_back(std::move(entry));
    }
  }
  j["nodes"] = std::move(nodes);
  return j.dump();
}

LocalObjectiveSet objectives_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const std::string kind = j.at("kind").get<std::string>();
  const double smooth = j.at("L").get<double>();
  const double sc = j.at("mu").get<double>();
  auto read_matrix = [](const nlohmann::json& rows) {
    const auto r0 = rows.at(0).get<std::vector<double>>();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(r0.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = to_vector(rows[r].get<std::vector<double>>());
    return m;
  };
  if (kind == "logistic") {
    std::vector<LogisticNode> nodes;
    for (const auto& e : j.at("nodes"))
      nodes.push_back({read_matrix(e.at("features")), to_vector(e.at("labels").get<std::vector<double>>())});
    return LocalObjectiveSet::logistic(std::move(nodes), j.at("reg").get<double>(), smooth, sc);
  }
  if (kind == "quadratic") {
    std::vector<QuadraticNode> nodes;
    for (const auto& e : j.at("nodes")) {
      QuadraticNode q;
      q.linear = to_vector(e.at("linear").get<std::vector<double>>());
      q.constant = e.value("constant", 0.0);
      if (e.contains("tridiagonal")) {
        q.hessian = SymTridiagonal{to_vector(e["tridiagonal"].at("diag").get<std::vector<double>>()),
                                   to_vector(e["tridiagonal"].at("off").get<std::vector<double>>())};
      } else {
        q.hessian = read_matrix(e.at("dense"));
      }
      nodes.push_back(std::move(q));
    }
    return LocalObjectiveSet::quadratic(std::move(nodes), smooth, sc);
  }
  throw std::invalid_argument("unknown objective kind '" + kind + "'");
}

void write_constants_csv(std::ostream& out, const LocalObjectiveSet& s) {
  out << "L,mu,kappa\n" << format_double(s.L()) << ',' << format_double(s.mu()) << ','
      << format_double(s.kappa()) << '\n';
}

}  // namespace adom

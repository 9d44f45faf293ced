#pragma once

// Local objectives f_i, their primal and (for quadratics) dual gradient
// oracles, synthetic data, and a centralized reference solver.

#include "adom/dvector.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <variant>
#include <vector>

namespace adom {

// Symmetric tridiagonal matrix: diag has d entries, off has d-1.
struct SymTridiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd off;

  Eigen::Index size() const { return diag.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd dense() const;
};

// f(x) = 0.5 x^T Q x + c^T x + constant
struct QuadraticNode {
  std::variant<Eigen::MatrixXd, SymTridiagonal> hessian;
  Eigen::VectorXd linear;
  double constant = 0.0;

  Eigen::MatrixXd dense_hessian() const;
};

// f(x) = (1/m) sum_j log(1 + exp(-b_j a_j^T x)) + (reg/2) ||x||^2, rows of `features` are a_j.
struct LogisticNode {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
};

enum class ObjectiveKind { Logistic, Quadratic };

class UnsupportedOracle : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LocalObjectiveSet {
 public:
  static LocalObjectiveSet logistic(std::vector<LogisticNode> nodes, double reg, double smoothness,
                                    double strong_convexity);
  static LocalObjectiveSet quadratic(std::vector<QuadraticNode> nodes, double smoothness,
                                     double strong_convexity);

  ObjectiveKind kind() const { return kind_; }
  int n() const { return n_; }
  int d() const { return d_; }
  double L() const { return smoothness_; }
  double mu() const { return strong_convexity_; }
  double kappa() const { return smoothness_ / strong_convexity_; }
  double reg() const { return reg_; }

  const std::vector<LogisticNode>& logistic_nodes() const { return logistic_; }
  const std::vector<QuadraticNode>& quadratic_nodes() const { return quadratic_; }

  double value_block(int i, const Eigen::VectorXd& x) const;
  Eigen::VectorXd grad_block(int i, const Eigen::VectorXd& x) const;
  // Solves grad f_i(x) = y; quadratic kind only.
  Eigen::VectorXd dual_grad_block(int i, const Eigen::VectorXd& y) const;
  // f_i(x) - f_i(y) - <grad f_i(y), x - y>, evaluated without cancellation for quadratics.
  double bregman_block(int i, const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  double value_F(const DistVec& x) const;
  DistVec grad_F(const DistVec& x) const;
  double bregman_F(const DistVec& x, const DistVec& y) const;

  // Eigenvalue check of mu*I <= Q_i <= L*I for every quadratic node; logistic returns true.
  bool verify_quadratic_constants(double tol = 1e-9) const;

 private:
  ObjectiveKind kind_ = ObjectiveKind::Quadratic;
  int n_ = 0;
  int d_ = 0;
  double smoothness_ = 0.0;
  double strong_convexity_ = 0.0;
  double reg_ = 0.0;
  std::vector<LogisticNode> logistic_;
  std::vector<QuadraticNode> quadratic_;
};

// Gaussian features, planted unit separator, 5% label flips; reg chosen so
// that (L_data + reg) / reg = kappa_target.
LocalObjectiveSet gen_synthetic_logistic(int n, int m, int d, std::uint64_t seed, double kappa_target);

// Dense quadratics Q_i = U_i diag(spectrum) U_i^T with spectrum spanning [mu, L]
// (both endpoints attained) and Gaussian linear terms.
LocalObjectiveSet gen_random_quadratic(int n, int d, double smoothness, double strong_convexity,
                                       std::uint64_t seed);

struct ReferenceSolution {
  Eigen::VectorXd x;
  double grad_norm = 0.0;
  std::uint64_t iterations = 0;
};

// Accelerated gradient descent on (1/n) sum_i f_i until ||(1/n) sum grad f_i|| <= tol.
ReferenceSolution reference_minimizer(const LocalObjectiveSet& objectives, double tol,
                                      std::uint64_t max_iterations = 10'000'000);

// Minimizer of sum_i f_i for quadratic objectives via a dense Cholesky solve.
Eigen::VectorXd quadratic_minimizer(const LocalObjectiveSet& objectives);

std::string to_json(const LocalObjectiveSet& objectives);
LocalObjectiveSet objectives_from_json(const std::string& text);
void write_constants_csv(std::ostream& out, const LocalObjectiveSet& objectives);

}  // namespace adom

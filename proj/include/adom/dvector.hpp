#pragma once

// Stacked vectors in (R^d)^V and the linear maps the algorithms apply to
// them: gossip mixing W (x) I_d, the consensus projection P, and the
// multi-consensus operator W(k;T).

#include "adom/netmodel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace adom {

class DistVec {
 public:
  DistVec() = default;
  DistVec(int n, int d, double fill = 0.0);

  // Every block equal to `block`.
  static DistVec consensus(int n, const Eigen::VectorXd& block);

  int n() const { return n_; }
  int d() const { return d_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> block(int i) { return {data_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)}; }
  std::span<const double> block(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)};
  }
  Eigen::Map<Eigen::VectorXd> block_map(int i) { return {data_.data() + static_cast<std::size_t>(i) * d_, d_}; }
  Eigen::Map<const Eigen::VectorXd> block_map(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * d_, d_};
  }

  double& operator()(int i, int l) { return data_[static_cast<std::size_t>(i) * d_ + l]; }
  double operator()(int i, int l) const { return data_[static_cast<std::size_t>(i) * d_ + l]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  DistVec& operator+=(const DistVec& o);
  DistVec& operator-=(const DistVec& o);
  DistVec& operator*=(double a);
  // this += a * o
  DistVec& axpy(double a, const DistVec& o);

  friend DistVec operator+(DistVec a, const DistVec& b) { return a += b; }
  friend DistVec operator-(DistVec a, const DistVec& b) { return a -= b; }
  friend DistVec operator*(double s, DistVec a) { return a *= s; }
  friend DistVec operator*(DistVec a, double s) { return a *= s; }

  friend bool operator==(const DistVec&, const DistVec&) = default;

  double squared_norm() const;
  double max_abs() const;
  bool all_finite() const;
  Eigen::VectorXd block_sum() const;
  Eigen::VectorXd mean_block() const;

 private:
  int n_ = 0;
  int d_ = 0;
  std::vector<double> data_;
};

double dot(const DistVec& a, const DistVec& b);

// a*u + b*v
DistVec lincomb(double a, const DistVec& u, double b, const DistVec& v);

// Output block i = sum_j W[i][j] v_j, summed over nonzero W[i][j] in ascending j.
DistVec mix(const GossipMatrix& w, const DistVec& v);

// Block i minus the mean block.
DistVec project_consensus(const DistVec& v);

// ||P v||^2
double consensus_gap(const DistVec& v);

bool in_consensus_space(const DistVec& v, double tol = 1e-12);
bool in_zero_sum_space(const DistVec& v, double tol = 1e-10);

// W(k;T) v = v - prod_{q=kT}^{kT+T-1} (I - W(q)) v, applied as T sequential mixes.
DistVec multi_mix(const GossipSequence& seq, std::uint64_t k, int t, const DistVec& v);

// Same operator applied to several payloads sharing the same T rounds.
std::vector<DistVec> multi_mix(const GossipSequence& seq, std::uint64_t k, int t,
                               const std::vector<DistVec>& payloads);

std::string to_json(const DistVec& v);
DistVec distvec_from_json(const std::string& text);

// Little-endian 64-bit floats, node-major, preceded by no header.
void write_binary(std::ostream& out, const DistVec& v);
DistVec read_binary(std::istream& in, int n, int d);

}  // namespace adom

#include "adom/dvector.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace adom {

namespace {

void require_same_shape(const DistVec& a, const DistVec& b) {
  if (a.n() != b.n() || a.d() != b.d())
    throw std::invalid_argument("DistVec shape mismatch: (" + std::to_string(a.n()) + "," +
                                std::to_string(a.d()) + ") vs (" + std::to_string(b.n()) + "," +
                                std::to_string(b.d()) + ")");
}

}  // namespace

DistVec::DistVec(int n, int d, double fill) : n_(n), d_(d) {
  if (n < 0 || d < 0) throw std::invalid_argument("DistVec dimensions must be nonnegative");
  data_.assign(static_cast<std::size_t>(n) * d, fill);
}

DistVec DistVec::consensus(int n, const Eigen::VectorXd& block) {
  DistVec v(n, static_cast<int>(block.size()));
  for (int i = 0; i < n; ++i) v.block_map(i) = block;
  return v;
}

DistVec& DistVec::operator+=(const DistVec& o) {
  require_same_shape(*this, o);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

DistVec& DistVec::operator-=(const DistVec& o) {
  require_same_shape(*this, o);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
  return *this;
}

DistVec& DistVec::operator*=(double a) {
  for (auto& x : data_) x *= a;
  return *this;
}

DistVec& DistVec::axpy(double a, const DistVec& o) {
  require_same_shape(*this, o);
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += a * o.data_[k];
  return *this;
}

double DistVec::squared_norm() const {
  double s = 0.0;
  for (double x : data_) s += x * x;
  return s;
}

double DistVec::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

bool DistVec::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Eigen::VectorXd DistVec::block_sum() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(d_);
  for (int i = 0; i < n_; ++i) s += block_map(i);
  return s;
}

Eigen::VectorXd DistVec::mean_block() const {
  if (n_ == 0) return Eigen::VectorXd::Zero(d_);
  return block_sum() / static_cast<double>(n_);
}

double dot(const DistVec& a, const DistVec& b) {
  require_same_shape(a, b);
  const auto fa = a.flat();
  const auto fb = b.flat();
  double s = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) s += fa[k] * fb[k];
  return s;
}

DistVec lincomb(double a, const DistVec& u, double b, const DistVec& v) {
  require_same_shape(u, v);
  DistVec out(u.n(), u.d());
  auto o = out.flat();
  const auto fu = u.flat();
  const auto fv = v.flat();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = a * fu[k] + b * fv[k];
  return out;
}

DistVec mix(const GossipMatrix& w, const DistVec& v) {
  if (w.n() != v.n())
    throw std::invalid_argument("mix: gossip matrix is " + std::to_string(w.n()) + "x" +
                                std::to_string(w.n()) + " but vector has " + std::to_string(v.n()) +
                                " blocks");
  if (w.rows.size() != static_cast<std::size_t>(w.n()))
    throw std::invalid_argument("mix: gossip matrix row pattern not built");
  DistVec out(v.n(), v.d());
  const int d = v.d();
  for (int i = 0; i < v.n(); ++i) {
    auto dst = out.block(i);
    for (const auto& [j, wij] : w.rows[i]) {
      const auto src = v.block(j);
      for (int l = 0; l < d; ++l) dst[l] += wij * src[l];
    }
  }
  return out;
}

DistVec project_consensus(const DistVec& v) {
  const Eigen::VectorXd mean = v.mean_block();
  DistVec out = v;
  for (int i = 0; i < v.n(); ++i) out.block_map(i) -= mean;
  return out;
}

double consensus_gap(const DistVec& v) { return project_consensus(v).squared_norm(); }

bool in_consensus_space(const DistVec& v, double tol) { return consensus_gap(v) <= tol; }

bool in_zero_sum_space(const DistVec& v, double tol) {
  return v.block_sum().cwiseAbs().maxCoeff() <= tol * (1.0 + std::sqrt(v.squared_norm()));
}

std::vector<DistVec> multi_mix(const GossipSequence& seq, std::uint64_t k, int t,
                               const std::vector<DistVec>& payloads) {
  if (t < 1) throw std::invalid_argument("multi_mix: T must be >= 1");
  std::vector<DistVec> residual = payloads;
  const std::uint64_t first = k * static_cast<std::uint64_t>(t);
  for (int s = 0; s < t; ++s) {
    const GossipMatrix& w = seq.at(first + static_cast<std::uint64_t>(s));
    for (auto& r : residual) r -= mix(w, r);
  }
  std::vector<DistVec> out;
  out.reserve(payloads.size());
  for (std::size_t p = 0; p < payloads.size(); ++p) out.push_back(payloads[p] - residual[p]);
  return out;
}

DistVec multi_mix(const GossipSequence& seq, std::uint64_t k, int t, const DistVec& v) {
  return std::move(multi_mix(seq, k, t, std::vector<DistVec>{v}).front());
}

std::string to_json(const DistVec& v) {
  nlohmann::json j;
  j["n"] = v.n();
  j["d"] = v.d();
  nlohmann::json blocks = nlohmann::json::array();
  for (int i = 0; i < v.n(); ++i) {
    const auto b = v.block(i);
    blocks.push_back(std::vector<double>(b.begin(), b.end()));
  }
  j["blocks"] = std::move(blocks);
  return j.dump();
}

DistVec distvec_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const int n = j.at("n").get<int>();
  const int d = j.at("d").get<int>();
  const auto& blocks = j.at("blocks");
  if (static_cast<int>(blocks.size()) != n) throw std::invalid_argument("DistVec JSON: block count != n");
  DistVec v(n, d);
  for (int i = 0; i < n; ++i) {
    const auto b = blocks[i].get<std::vector<double>>();
    if (static_cast<int>(b.size()) != d) throw std::invalid_argument("DistVec JSON: block length != d");
    std::copy(b.begin(), b.end(), v.block(i).begin());
  }
  return v;
}

void write_binary(std::ostream& out, const DistVec& v) {
  static_assert(sizeof(double) == 8);
  for (double x : v.flat()) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
  if (!out) throw std::runtime_error("write_binary: stream error");
}

DistVec read_binary(std::istream& in, int n, int d) {
  DistVec v(n, d);
  for (auto& x : v.flat()) {
    char buf[8];
    if (!in.read(buf, 8)) throw std::runtime_error("read_binary: truncated input");
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    x = std::bit_cast<double>(bits);
  }
  return v;
}

}  // namespace adom

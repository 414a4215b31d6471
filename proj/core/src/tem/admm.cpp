#include "gridledger/tem/admm.hpp"

#include <cmath>
#include <stdexcept>

#include "gridledger/chain/bytes.hpp"
#include "gridledger/chain/crypto.hpp"

namespace gridledger::tem {

std::vector<double> TradeTensor::slice(int n) const {
  std::vector<double> out;
  out.reserve(std::size_t(std::max(n_ - 1, 0)) * t_);
  for (int m = 0; m < n_; ++m) {
    if (m == n) continue;
    auto p = pair(n, m);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void TradeTensor::set_slice(int n, std::span<const double> values) {
  if (values.size() != std::size_t(std::max(n_ - 1, 0)) * t_)
    throw std::invalid_argument("set_slice: expected " + std::to_string((n_ - 1) * t_) + " values");
  std::size_t pos = 0;
  for (int m = 0; m < n_; ++m) {
    if (m == n) continue;
    for (int t = 0; t < t_; ++t) (*this)(n, m, t) = values[pos++];
  }
}

DualState DualState::zeros(int num_users, int horizon, double rho) {
  DualState d;
  d.e = TradeTensor(num_users, horizon);
  d.e_hat = TradeTensor(num_users, horizon);
  d.lambda = TradeTensor(num_users, horizon);
  d.rho = rho;
  d.k = 1;
  return d;
}

double RhoSchedule::at(int k) const {
  if (kind == RhoKind::Fixed) return value;
  return 1.0 / std::max(k, 1);
}

void validate(const AdmmParams& p) {
  if (!(p.eps > 0.0)) throw std::invalid_argument("admm: eps must be positive");
  if (p.max_iter < 1) throw std::invalid_argument("admm: max_iter must be at least 1");
  if (p.rho.kind == RhoKind::Fixed && !(p.rho.value > 0.0)) throw std::invalid_argument("admm: rho must be positive");
}

DualState sct_step(const DualState& d) {
  if (!(d.rho > 0.0)) throw std::invalid_argument("sct_step: rho must be positive");
  DualState out = d;
  const int N = d.num_users(), T = d.horizon();
  const double rho = d.rho;
  for (int n = 0; n < N; ++n)
    for (int m = n + 1; m < N; ++m)
      for (int t = 0; t < T; ++t) {
        const double h = (rho * (d.e(n, m, t) - d.e(m, n, t)) - (d.lambda(n, m, t) - d.lambda(m, n, t))) / (2.0 * rho);
        out.e_hat(n, m, t) = h;
        out.e_hat(m, n, t) = -h;
        out.lambda(n, m, t) = d.lambda(n, m, t) + rho * (h - d.e(n, m, t));
        out.lambda(m, n, t) = d.lambda(m, n, t) + rho * (-h - d.e(m, n, t));
      }
  return out;
}

double primal_residual(const DualState& d) {
  const int N = d.num_users(), T = d.horizon();
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    double sq = 0.0;
    for (int m = 0; m < N; ++m)
      for (int t = 0; t < T; ++t) {
        const double g = d.e_hat(n, m, t) - d.e(n, m, t);
        sq += g * g;
      }
    total += std::sqrt(sq);
  }
  return total;
}

double dual_change(const DualState& d, const TradeTensor& lambda_prev) {
  if (lambda_prev.data().size() != d.lambda.data().size())
    throw std::invalid_argument("dual_change: dimension mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < lambda_prev.data().size(); ++i) {
    const double g = d.lambda.data()[i] - lambda_prev.data()[i];
    sq += g * g;
  }
  return std::sqrt(sq);
}

bool has_converged(const DualState& d, const TradeTensor& lambda_prev, double eps) {
  return primal_residual(d) <= eps && dual_change(d, lambda_prev) <= eps;
}

std::vector<std::uint8_t> encode_dual_state(const DualState& d) {
  chain::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(d.num_users()));
  w.u32(static_cast<std::uint32_t>(d.horizon()));
  w.u64(static_cast<std::uint64_t>(d.k));
  w.f64(d.rho);
  w.f64_array(d.e.data());
  w.f64_array(d.e_hat.data());
  w.f64_array(d.lambda.data());
  return w.take();
}

std::string dual_digest(const DualState& d) { return chain::to_hex(chain::sha256(encode_dual_state(d))); }

}  // namespace gridledger::tem

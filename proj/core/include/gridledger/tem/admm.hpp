#pragma once

// ADMM coordination state for peer-to-peer trades and the smart-contract
// task that updates it.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gridledger::tem {

// Dense N x N x T array indexed [n][m][t]; the diagonal stays zero.
class TradeTensor {
 public:
  TradeTensor() = default;
  TradeTensor(int num_users, int horizon) : n_(num_users), t_(horizon), data_(std::size_t(n_) * n_ * t_, 0.0) {}

  int num_users() const { return n_; }
  int horizon() const { return t_; }

  double& operator()(int n, int m, int t) { return data_[index(n, m, t)]; }
  double operator()(int n, int m, int t) const { return data_[index(n, m, t)]; }

  std::span<double> pair(int n, int m) { return {data_.data() + index(n, m, 0), std::size_t(t_)}; }
  std::span<const double> pair(int n, int m) const { return {data_.data() + index(n, m, 0), std::size_t(t_)}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  // User n's trades toward every peer in ascending peer order, skipping n:
  // the (N-1) x T slice a user submits.
  std::vector<double> slice(int n) const;
  void set_slice(int n, std::span<const double> values);

  bool operator==(const TradeTensor&) const = default;

 private:
  std::size_t index(int n, int m, int t) const { return (std::size_t(n) * n_ + m) * t_ + t; }

  int n_ = 0;
  int t_ = 0;
  std::vector<double> data_;
};

struct DualState {
  TradeTensor e;        // latest user decisions
  TradeTensor e_hat;    // auxiliary trades
  TradeTensor lambda;   // multipliers
  double rho = 1.0;
  int k = 1;            // iteration whose decisions are being collected

  static DualState zeros(int num_users, int horizon, double rho);

  int num_users() const { return e.num_users(); }
  int horizon() const { return e.horizon(); }

  bool operator==(const DualState&) const = default;
};

enum class RhoKind { Fixed, Reciprocal };

struct RhoSchedule {
  RhoKind kind = RhoKind::Fixed;
  double value = 1.0;  // Fixed only

  static RhoSchedule fixed(double v) { return {RhoKind::Fixed, v}; }
  static RhoSchedule reciprocal() { return {RhoKind::Reciprocal, 1.0}; }

  // Penalty used while collecting iteration k (k >= 1).
  double at(int k) const;
};

struct AdmmParams {
  double eps = 1e-6;
  int max_iter = 1000;
  RhoSchedule rho;
};

// Throws std::invalid_argument when eps <= 0, max_iter < 1 or a fixed rho <= 0.
void validate(const AdmmParams& p);

// Closed-form auxiliary update followed by the multiplier update. k and rho
// are left unchanged.
DualState sct_step(const DualState& d);

// sum_n ||e_hat_n - e_n||_2 over each user's flattened slice.
double primal_residual(const DualState& d);

// ||lambda - lambda_prev||_2 over the flattened tensor.
double dual_change(const DualState& d, const TradeTensor& lambda_prev);

// Both residuals <= eps.
bool has_converged(const DualState& d, const TradeTensor& lambda_prev, double eps);

// SHA-256 over the canonical encoding (N, T, k, rho, e, e_hat, lambda as
// little-endian IEEE doubles), hex encoded.
std::string dual_digest(const DualState& d);

std::vector<std::uint8_t> encode_dual_state(const DualState& d);

}  // namespace gridledger::tem

#pragma once

// Convex quadratic programs in dense form:
//
//   minimize    0.5 x'Px + q'x + constant
//   subject to  A_eq x = b_eq,  A_in x (<= or >=) b_in,  lower <= x <= upper
//
// Duals follow the convention
//
//   Px + q + A_eq'y + sum_i sign_i a_i z_i - z_lower + z_upper = 0
//
// with z, z_lower, z_upper >= 0 and sign_i = +1 for <= rows, -1 for >= rows.

#include <iosfwd>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "gridledger/energy_model.hpp"

namespace gridledger::qp {

struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double constant = 0.0;
  energy::LinearConstraintSet constraints;
  std::string layout_tag;

  int num_vars() const { return static_cast<int>(q.size()); }
};

enum class Status { Optimal, MaxIter, Infeasible };

std::string_view to_string(Status s);

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double dual_infeasibility = 0.0;  // most negative multiplier, as a magnitude

  double max() const;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y_eq;
  Eigen::VectorXd z_in;
  Eigen::VectorXd z_lower;
  Eigen::VectorXd z_upper;
  Status status = Status::MaxIter;
  KktResiduals kkt;
  int iterations = 0;
  double objective = 0.0;
  bool polished = false;
};

struct QpOptions {
  double tol = 1e-8;
  int max_iter = 50000;
  // Previous solution of a problem with the same shape. The solver first
  // tries to recover the optimum from its active set and falls back to a
  // cold interior-point solve.
  const QpSolution* warm_start = nullptr;
};

// Throws std::invalid_argument on inconsistent dimensions or a P that is not
// symmetric positive semidefinite.
void validate(const QpProblem& p);

bool is_psd(const Eigen::MatrixXd& P, double shift = 1e-10);

QpSolution solve_qp(const QpProblem& p, const QpOptions& options);
QpSolution solve_qp(const QpProblem& p, double tol = 1e-8, int max_iter = 50000);

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& sol);

double objective_value(const QpProblem& p, const Eigen::VectorXd& x);

// Largest violation of any row or bound at x.
double max_violation(const QpProblem& p, const Eigen::VectorXd& x);

struct GridBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct OracleResult {
  Eigen::VectorXd x;
  double value = 0.0;
  long long feasible_points = 0;
};

inline constexpr int kOracleMaxDim = 4;

// Exhaustive evaluation over `resolution` evenly spaced points per axis.
// Returns nullopt when no lattice point is feasible within `feas_tol`.
// Throws std::invalid_argument above kOracleMaxDim dimensions or for an
// unbounded box.
std::optional<OracleResult> grid_oracle(const QpProblem& p, const GridBox& box, int resolution,
                                        double feas_tol = 1e-9);

// CSV sections "P", "q", "A_eq|b_eq", "A_in|b_in", "bounds", separated by
// "# <name>" lines.
void dump_csv(const QpProblem& p, std::ostream& out);

}  // namespace gridledger::qp

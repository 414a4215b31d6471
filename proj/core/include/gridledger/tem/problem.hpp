#pragma once

// Joint (centralized) problems for every mode and the per-user ULT problem
// of the ADMM decomposition.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridledger/energy_model.hpp"
#include "gridledger/qp.hpp"
#include "gridledger/scenario.hpp"
#include "gridledger/tem/admm.hpp"

namespace gridledger::tem {

// Users' blocks laid end to end; every block uses energy::UserLayout.
class JointLayout {
 public:
  JointLayout(Mode mode, int num_users, int horizon)
      : user_(mode, horizon, num_users), num_users_(num_users) {}

  const energy::UserLayout& user() const { return user_; }
  int num_users() const { return num_users_; }
  int size() const { return num_users_ * user_.size(); }
  int offset(int n) const { return n * user_.size(); }
  int column(int n, energy::Var v, int t = 0) const { return offset(n) + user_.index(v, t); }
  // Column of e_T from user n toward user m at slot t.
  int trade_column(int n, int m, int t) const {
    return offset(n) + user_.trade_index(energy::UserLayout::peer_slot(n, m), t);
  }

 private:
  energy::UserLayout user_;
  int num_users_;
};

qp::QpProblem assemble_problem(const scenario::Scenario& s, Mode mode);

// ULT for user n under TEM: home cost minus rewards plus, for every peer m
// and slot t, (rho/2)(e_hat[n][m][t] - e[n][m][t])^2 - lambda[n][m][t] e[n][m][t].
qp::QpProblem assemble_ult(const scenario::Scenario& s, int n, const DualState& d);

struct IterationRecord {
  int k = 0;
  double rho = 0.0;
  double primal_residual = 0.0;
  double dual_change = 0.0;
  std::string digest;  // dual_digest after the update
};

enum class OutcomeStatus { Optimal, Converged, MaxIter };

std::string_view to_string(OutcomeStatus s);

struct Outcome {
  Mode mode = Mode::Tem;
  OutcomeStatus status = OutcomeStatus::Optimal;
  bool distributed = false;
  std::vector<energy::Schedule> schedules;
  std::vector<energy::CostBreakdown> costs;
  energy::CostBreakdown totals;
  int iterations = 0;
  std::vector<IterationRecord> history;
  std::optional<DualState> final_state;

  double total_cost() const { return totals.net; }
};

class SolveError : public std::runtime_error {
 public:
  SolveError(Mode mode, qp::Status status, int user, int iteration, const std::string& what);

  Mode mode() const { return mode_; }
  qp::Status status() const { return status_; }
  int user() const { return user_; }            // -1 for the joint problem
  int iteration() const { return iteration_; }  // -1 outside ADMM

 private:
  Mode mode_;
  qp::Status status_;
  int user_;
  int iteration_;
};

// Per-user costs and totals for the given schedules.
Outcome make_outcome(const scenario::Scenario& s, Mode mode, std::vector<energy::Schedule> schedules);

struct CentralizedSolution {
  Outcome outcome;
  qp::QpSolution qp;
  JointLayout layout;
};

CentralizedSolution solve_centralized_full(const scenario::Scenario& s, Mode mode, double tol = 1e-8);
Outcome solve_centralized(const scenario::Scenario& s, Mode mode, double tol = 1e-8);

// The ADMM fixed point implied by a centralized TEM solution:
// e = e_hat = the optimal trades, lambda[n][m] = lambda[m][n] = minus the
// clearing-row multiplier.
DualState fixed_point_from_centralized(const scenario::Scenario& s, const CentralizedSolution& sol, double rho);

}  // namespace gridledger::tem

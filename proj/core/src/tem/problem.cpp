#include "gridledger/tem/problem.hpp"

#include <stdexcept>

namespace gridledger::tem {

using energy::Var;

std::string_view to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::Optimal: return "optimal";
    case OutcomeStatus::Converged: return "converged";
    case OutcomeStatus::MaxIter: return "max-iter";
  }
  return "?";
}

SolveError::SolveError(Mode mode, qp::Status status, int user, int iteration, const std::string& what)
    : std::runtime_error(what), mode_(mode), status_(status), user_(user), iteration_(iteration) {}

qp::QpProblem assemble_problem(const scenario::Scenario& s, Mode mode) {
  const int N = s.num_users(), T = s.horizon();
  if (N < 1) throw std::invalid_argument("assemble_problem: scenario has no users");
  const JointLayout L(mode, N, T);
  const int width = L.user().size();

  qp::QpProblem p;
  p.P = Eigen::MatrixXd::Zero(L.size(), L.size());
  p.q = Eigen::VectorXd::Zero(L.size());
  energy::ConstraintBuilder b(L.size());
  for (int n = 0; n < N; ++n) {
    const auto obj = energy::build_user_objective(s, n, mode);
    p.P.block(L.offset(n), L.offset(n), width, width) = obj.P;
    p.q.segment(L.offset(n), width) = obj.q;
    p.constant += obj.constant;
    b.append(energy::build_user_constraints(s, n, mode), L.offset(n));
  }
  if (has_horizontal(mode))
    for (int n = 0; n < N; ++n)
      for (int m = n + 1; m < N; ++m)
        for (int t = 0; t < T; ++t)
          b.add_eq(energy::RowTag::Clearing, {{L.trade_column(n, m, t), 1.0}, {L.trade_column(m, n, t), 1.0}}, 0.0);
  p.constraints = b.build();
  p.layout_tag = std::string("joint/") + std::string(to_string(mode)) + "/N" + std::to_string(N) + "/T" +
                 std::to_string(T);
  return p;
}

qp::QpProblem assemble_ult(const scenario::Scenario& s, int n, const DualState& d) {
  const int N = s.num_users(), T = s.horizon();
  if (n < 0 || n >= N) throw std::out_of_range("assemble_ult: user index out of range");
  if (d.num_users() != N || d.horizon() != T) throw std::invalid_argument("assemble_ult: dual state dimensions");
  const energy::UserLayout L(Mode::Tem, T, N);
  const auto obj = energy::build_user_objective(s, n, Mode::Tem);
  qp::QpProblem p;
  p.P = obj.P;
  p.q = obj.q;
  p.constant = obj.constant;
  for (int m = 0; m < N; ++m) {
    if (m == n) continue;
    const int slot = energy::UserLayout::peer_slot(n, m);
    for (int t = 0; t < T; ++t) {
      const int col = L.trade_index(slot, t);
      const double h = d.e_hat(n, m, t);
      p.P(col, col) += d.rho;
      p.q[col] += -d.rho * h - d.lambda(n, m, t);
      p.constant += 0.5 * d.rho * h * h;
    }
  }
  p.constraints = energy::build_user_constraints(s, n, Mode::Tem);
  p.layout_tag = "ult/user" + std::to_string(n);
  return p;
}

Outcome make_outcome(const scenario::Scenario& s, Mode mode, std::vector<energy::Schedule> schedules) {
  Outcome out;
  out.mode = mode;
  out.schedules = std::move(schedules);
  for (int n = 0; n < s.num_users(); ++n) {
    out.costs.push_back(energy::evaluate(out.schedules[n], s, n));
    out.totals += out.costs.back();
  }
  return out;
}

CentralizedSolution solve_centralized_full(const scenario::Scenario& s, Mode mode, double tol) {
  const qp::QpProblem p = assemble_problem(s, mode);
  qp::QpSolution sol = qp::solve_qp(p, tol);
  if (sol.status != qp::Status::Optimal)
    throw SolveError(mode, sol.status, -1, -1,
                     std::string(to_string(mode)) + " problem: solver reported " + std::string(qp::to_string(sol.status)));
  const JointLayout L(mode, s.num_users(), s.horizon());
  std::vector<energy::Schedule> schedules;
  for (int n = 0; n < s.num_users(); ++n)
    schedules.push_back(energy::extract_schedule(
        L.user(), std::span<const double>(sol.x.data() + L.offset(n), L.user().size()), n, s.num_users()));
  Outcome out = make_outcome(s, mode, std::move(schedules));
  out.status = OutcomeStatus::Optimal;
  out.iterations = sol.iterations;
  return {std::move(out), std::move(sol), L};
}

Outcome solve_centralized(const scenario::Scenario& s, Mode mode, double tol) {
  return solve_centralized_full(s, mode, tol).outcome;
}

DualState fixed_point_from_centralized(const scenario::Scenario& s, const CentralizedSolution& sol, double rho) {
  if (sol.outcome.mode != Mode::Tem) throw std::invalid_argument("fixed point requires a TEM solution");
  const int N = s.num_users(), T = s.horizon();
  DualState d = DualState::zeros(N, T, rho);
  // Clearing rows follow all user rows.
  Eigen::Index row = sol.qp.y_eq.size() - N * (N - 1) / 2 * T;
  for (int n = 0; n < N; ++n)
    for (int m = n + 1; m < N; ++m)
      for (int t = 0; t < T; ++t, ++row) {
        const double lam = -sol.qp.y_eq[row];
        d.lambda(n, m, t) = lam;
        d.lambda(m, n, t) = lam;
      }
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < N; ++m) {
      if (m == n) continue;
      for (int t = 0; t < T; ++t) {
        d.e(n, m, t) = sol.qp.x[sol.layout.trade_column(n, m, t)];
        d.e_hat(n, m, t) = n < m ? sol.qp.x[sol.layout.trade_column(n, m, t)]
                                 : -sol.qp.x[sol.layout.trade_column(m, n, t)];
      }
    }
  return d;
}

}  // namespace gridledger::tem

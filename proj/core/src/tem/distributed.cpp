#include "gridledger/tem/distributed.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <stdexcept>
#include <thread>

namespace gridledger::tem {

namespace {

// Runs f(0..count-1) across worker threads; rethrows the exception of the
// lowest failing index.
template <class F>
void parallel_for(int count, F&& f) {
  const int workers = std::min<int>(count, std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            f(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::string_view to_string(Transport t) { return t == Transport::InProcess ? "inprocess" : "chain"; }

UserAgent::UserAgent(const scenario::Scenario& s, int n, double qp_tol) : s_(&s), n_(n), tol_(qp_tol) {
  if (n < 0 || n >= s.num_users()) throw std::out_of_range("UserAgent: user index out of range");
}

std::vector<double> UserAgent::solve(const DualState& snapshot) {
  const qp::QpProblem p = assemble_ult(*s_, n_, snapshot);
  qp::QpOptions opt;
  opt.tol = tol_;
  if (last_) opt.warm_start = &*last_;
  qp::QpSolution sol = qp::solve_qp(p, opt);
  if (sol.status != qp::Status::Optimal)
    throw SolveError(Mode::Tem, sol.status, n_, snapshot.k,
                     "ULT of user " + std::to_string(n_) + " at iteration " + std::to_string(snapshot.k) + ": " +
                         std::string(qp::to_string(sol.status)));
  last_ = std::move(sol);

  const energy::UserLayout L(Mode::Tem, s_->horizon(), s_->num_users());
  std::vector<double> slice;
  slice.reserve(std::size_t(L.num_peers()) * s_->horizon());
  for (int p2 = 0; p2 < L.num_peers(); ++p2)
    for (int t = 0; t < s_->horizon(); ++t) slice.push_back(last_->x[L.trade_index(p2, t)]);
  return slice;
}

energy::Schedule UserAgent::schedule() const {
  if (!last_) throw std::logic_error("UserAgent: no solution yet");
  const energy::UserLayout L(Mode::Tem, s_->horizon(), s_->num_users());
  return energy::extract_schedule(L, std::span<const double>(last_->x.data(), last_->x.size()), n_,
                                  s_->num_users());
}

Outcome run_distributed(const scenario::Scenario& s, const AdmmParams& params, Transport transport, double qp_tol) {
  validate(params);
  if (transport == Transport::Chain) return run_distributed_chain(s, params, ChainOptions{}, qp_tol).outcome;

  const int N = s.num_users(), T = s.horizon();
  std::vector<UserAgent> agents;
  for (int n = 0; n < N; ++n) agents.emplace_back(s, n, qp_tol);

  DualState d = DualState::zeros(N, T, params.rho.at(1));
  std::vector<IterationRecord> history;
  bool converged = false;
  while (!converged && d.k <= params.max_iter) {
    const DualState snapshot = d;
    std::vector<std::vector<double>> slices(N);
    parallel_for(N, [&](int n) { slices[n] = agents[n].solve(snapshot); });
    for (int n = 0; n < N; ++n) d.e.set_slice(n, slices[n]);
    const TradeTensor lambda_prev = d.lambda;
    d = sct_step(d);
    IterationRecord rec;
    rec.k = d.k;
    rec.rho = d.rho;
    rec.primal_residual = primal_residual(d);
    rec.dual_change = dual_change(d, lambda_prev);
    converged = rec.primal_residual <= params.eps && rec.dual_change <= params.eps;
    d.k += 1;
    d.rho = params.rho.at(d.k);
    rec.digest = dual_digest(d);
    history.push_back(std::move(rec));
  }

  std::vector<energy::Schedule> schedules;
  for (auto& a : agents) schedules.push_back(a.schedule());
  Outcome out = make_outcome(s, Mode::Tem, std::move(schedules));
  out.distributed = true;
  out.status = converged ? OutcomeStatus::Converged : OutcomeStatus::MaxIter;
  out.iterations = static_cast<int>(history.size());
  out.history = std::move(history);
  out.final_state = std::move(d);
  return out;
}

}  // namespace gridledger::tem

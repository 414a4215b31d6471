#include "gridledger/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace gridledger::qp {

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Problem after presolve: fixed columns substituted out, empty rows removed,
// inequalities normalized to <= form.
struct Reduced {
  int n = 0;
  std::vector<int> cols;       // reduced column -> original column
  std::vector<char> fixed;     // per original column
  Vec x_fixed;                 // original size, values of fixed columns
  SpMat P;
  Vec q;
  SpMat A;
  Vec b;
  std::vector<int> eq_rows;    // reduced eq row -> original row
  SpMat G;
  Vec h;
  std::vector<int> in_rows;    // reduced in row -> original row
  Vec lo, hi;
};

double sense_sign(const energy::LinearConstraintSet& c, int i) {
  return c.in_sense[i] == energy::Sense::LessEqual ? 1.0 : -1.0;
}

bool presolve(const QpProblem& p, double tol, Reduced& r) {
  const auto& c = p.constraints;
  const int n = p.num_vars();
  r.fixed.assign(n, 0);
  r.x_fixed = Vec::Zero(n);
  std::vector<int> reduced_of(n, -1);
  for (int j = 0; j < n; ++j) {
    const double lo = c.lower[j], hi = c.upper[j];
    if (lo > hi) return false;
    if (lo == hi) {
      r.fixed[j] = 1;
      r.x_fixed[j] = lo;
    } else {
      reduced_of[j] = static_cast<int>(r.cols.size());
      r.cols.push_back(j);
    }
  }
  r.n = static_cast<int>(r.cols.size());
  r.lo.resize(r.n);
  r.hi.resize(r.n);
  for (int k = 0; k < r.n; ++k) {
    r.lo[k] = c.lower[r.cols[k]];
    r.hi[k] = c.upper[r.cols[k]];
  }

  const Vec Px_fixed = p.P * r.x_fixed;
  std::vector<Triplet> trip;
  for (int k = 0; k < r.n; ++k)
    for (int l = 0; l < r.n; ++l) {
      const double v = p.P(r.cols[k], r.cols[l]);
      if (v != 0.0) trip.emplace_back(k, l, v);
    }
  r.P.resize(r.n, r.n);
  r.P.setFromTriplets(trip.begin(), trip.end());
  r.q.resize(r.n);
  for (int k = 0; k < r.n; ++k) r.q[k] = p.q[r.cols[k]] + Px_fixed[r.cols[k]];

  auto reduce_rows = [&](const Eigen::MatrixXd& M, const Vec& rhs, auto sign_of, auto empty_ok, SpMat& out,
                         Vec& out_rhs, std::vector<int>& rows) {
    trip.clear();
    std::vector<double> kept_rhs;
    for (int i = 0; i < M.rows(); ++i) {
      const double sign = sign_of(i);
      double shifted = sign * rhs[i];
      bool any = false;
      for (int j = 0; j < n; ++j) {
        const double v = M(i, j);
        if (v == 0.0) continue;
        if (r.fixed[j])
          shifted -= sign * v * r.x_fixed[j];
        else
          any = true;
      }
      if (!any) {
        if (!empty_ok(shifted, rhs[i])) return false;
        continue;
      }
      const int row = static_cast<int>(rows.size());
      for (int j = 0; j < n; ++j)
        if (M(i, j) != 0.0 && !r.fixed[j]) trip.emplace_back(row, reduced_of[j], sign * M(i, j));
      rows.push_back(i);
      kept_rhs.push_back(shifted);
    }
    out.resize(static_cast<Eigen::Index>(rows.size()), r.n);
    out.setFromTriplets(trip.begin(), trip.end());
    out_rhs = Eigen::Map<Vec>(kept_rhs.data(), static_cast<Eigen::Index>(kept_rhs.size()));
    return true;
  };

  const bool eq_ok = reduce_rows(
      c.eq_matrix, c.eq_rhs, [](int) { return 1.0; },
      [&](double shifted, double orig) { return std::abs(shifted) <= tol * (1.0 + std::abs(orig)); }, r.A, r.b,
      r.eq_rows);
  if (!eq_ok) return false;
  return reduce_rows(
      c.in_matrix, c.in_rhs, [&](int i) { return sense_sign(c, i); },
      [&](double shifted, double orig) { return shifted >= -tol * (1.0 + std::abs(orig)); }, r.G, r.h, r.in_rows);
}

// Regularized quasidefinite factorization [H + dI, A'; A, -dI] used as a
// preconditioner for iterative refinement against the exact operator.
class KktSystem {
 public:
  bool factor(const SpMat& H, const SpMat& A, double delta) {
    H_ = &H;
    A_ = &A;
    n_ = static_cast<int>(H.rows());
    m_ = static_cast<int>(A.rows());
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(H.nonZeros() + 2 * A.nonZeros() + n_ + m_));
    for (int k = 0; k < H.outerSize(); ++k)
      for (SpMat::InnerIterator it(H, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) {
        trip.emplace_back(n_ + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n_ + it.row(), it.value());
      }
    for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, delta);
    for (int i = 0; i < m_; ++i) trip.emplace_back(n_ + i, n_ + i, -delta);
    SpMat K(n_ + m_, n_ + m_);
    K.setFromTriplets(trip.begin(), trip.end());
    if (n_ + m_ == 0) return true;
    ldlt_.compute(K);
    return ldlt_.info() == Eigen::Success;
  }

  Vec apply(const Vec& v) const {
    Vec out(n_ + m_);
    const auto x = v.head(n_);
    const auto y = v.tail(m_);
    out.head(n_) = *H_ * x + A_->transpose() * y;
    out.tail(m_) = *A_ * x;
    return out;
  }

  // Solves the unregularized system starting from `sol`, refining until the
  // residual stops improving or falls below `target`.
  Vec solve(const Vec& rhs, Vec sol, int max_refine, double target) const {
    if (n_ + m_ == 0) return sol;
    double best = kInf;
    Vec best_sol = sol;
    for (int it = 0; it <= max_refine; ++it) {
      const Vec res = rhs - apply(sol);
      const double norm = inf_norm(res);
      if (!std::isfinite(norm)) break;
      if (norm < best) {
        best = norm;
        best_sol = sol;
      } else if (it > 2 && norm > 0.5 * best) {
        break;
      }
      if (norm <= target) break;
      sol += ldlt_.solve(res);
    }
    return best_sol;
  }

  int size() const { return n_ + m_; }

 private:
  const SpMat* H_ = nullptr;
  const SpMat* A_ = nullptr;
  int n_ = 0, m_ = 0;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

// ---- interior point ---------------------------------------------------------

struct IpmPoint {
  Vec x, y, s, z, wl, vl, wu, vu;
};

enum class IpmStatus { Converged, Stalled, MaxIter, Infeasible };

struct IpmResult {
  IpmPoint pt;
  IpmStatus status = IpmStatus::MaxIter;
  int iterations = 0;
};

IpmResult interior_point(const Reduced& r, int max_iter) {
  const int n = r.n, me = static_cast<int>(r.b.size()), mi = static_cast<int>(r.h.size());
  Vec ml = Vec::Zero(n), mu = Vec::Zero(n), lo = Vec::Zero(n), hi = Vec::Zero(n);
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(r.lo[j])) {
      ml[j] = 1.0;
      lo[j] = r.lo[j];
    }
    if (std::isfinite(r.hi[j])) {
      mu[j] = 1.0;
      hi[j] = r.hi[j];
    }
  }
  const double m_comp = mi + ml.sum() + mu.sum();

  IpmResult res;
  IpmPoint& pt = res.pt;
  pt.x.resize(n);
  for (int j = 0; j < n; ++j) {
    if (ml[j] && mu[j])
      pt.x[j] = 0.5 * (lo[j] + hi[j]);
    else if (ml[j])
      pt.x[j] = lo[j] + 1.0;
    else if (mu[j])
      pt.x[j] = hi[j] - 1.0;
    else
      pt.x[j] = 0.0;
  }
  pt.y = Vec::Zero(me);
  pt.s = (r.h - r.G * pt.x).cwiseMax(1.0);
  pt.z = Vec::Ones(mi);
  pt.wl = ((pt.x - lo).cwiseMax(1.0)).cwiseProduct(ml) + (Vec::Ones(n) - ml);
  pt.vl = ml;
  pt.wu = ((hi - pt.x).cwiseMax(1.0)).cwiseProduct(mu) + (Vec::Ones(n) - mu);
  pt.vu = mu;

  if (m_comp == 0) {
    res.status = IpmStatus::Converged;
    return res;
  }

  const double scale_p = 1.0 + std::max({inf_norm(r.b), inf_norm(r.h), inf_norm(lo), inf_norm(hi)});
  const double scale_d = 1.0 + inf_norm(r.q);
  const SpMat Gt = r.G.transpose();
  constexpr double kIpmTol = 1e-10;
  double best_primal = kInf;
  int primal_stuck = 0, tiny_steps = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter;
    const Vec rd = r.P * pt.x + r.q + r.A.transpose() * pt.y + Gt * pt.z - ml.cwiseProduct(pt.vl) +
                   mu.cwiseProduct(pt.vu);
    const Vec rp = r.A * pt.x - r.b;
    const Vec rg = r.G * pt.x + pt.s - r.h;
    const Vec rl = ml.cwiseProduct(pt.x - pt.wl - lo);
    const Vec ru = mu.cwiseProduct(pt.x + pt.wu - hi);
    const double gap = pt.s.dot(pt.z) + ml.dot(pt.wl.cwiseProduct(pt.vl)) + mu.dot(pt.wu.cwiseProduct(pt.vu));
    const double mu_avg = gap / m_comp;
    const double primal = std::max({inf_norm(rp), inf_norm(rg), inf_norm(rl), inf_norm(ru)}) / scale_p;
    const double dual = inf_norm(rd) / scale_d;

    if (primal <= kIpmTol && dual <= kIpmTol && mu_avg <= kIpmTol) {
      res.status = IpmStatus::Converged;
      return res;
    }
    const double dual_size =
        std::max({inf_norm(pt.z), inf_norm(pt.vl.cwiseProduct(ml)), inf_norm(pt.vu.cwiseProduct(mu))});
    if (primal > 1e-6 && dual_size > 1e12 * scale_d) {
      res.status = IpmStatus::Infeasible;
      return res;
    }
    if (primal < 0.99 * best_primal) {
      best_primal = primal;
      primal_stuck = 0;
    } else if (++primal_stuck > 60 && primal > 1e-6) {
      res.status = IpmStatus::Infeasible;
      return res;
    }

    const Vec dz_s = pt.z.cwiseQuotient(pt.s);
    const Vec dl = ml.cwiseProduct(pt.vl.cwiseQuotient(pt.wl));
    const Vec du = mu.cwiseProduct(pt.vu.cwiseQuotient(pt.wu));
    const SpMat GtDG = SpMat(Gt * dz_s.asDiagonal()) * r.G;
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(r.P.nonZeros() + GtDG.nonZeros() + n));
    for (const SpMat* M : {&r.P, &GtDG})
      for (int k = 0; k < M->outerSize(); ++k)
        for (SpMat::InnerIterator it(*M, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, dl[j] + du[j]);
    SpMat H(n, n);
    H.setFromTriplets(trip.begin(), trip.end());
    KktSystem kkt;
    if (!kkt.factor(H, r.A, 1e-7)) {
      res.status = IpmStatus::Stalled;
      return res;
    }

    struct Dir {
      Vec dx, dy, ds, dz, dwl, dvl, dwu, dvu;
    };
    auto direction = [&](const Vec& rsz, const Vec& rwl, const Vec& rwu) {
      Vec rhs(n + me);
      rhs.head(n) = -rd + Gt * (rsz - pt.z.cwiseProduct(rg)).cwiseQuotient(pt.s) -
                    ml.cwiseProduct((rwl + pt.vl.cwiseProduct(rl)).cwiseQuotient(pt.wl)) +
                    mu.cwiseProduct((rwu - pt.vu.cwiseProduct(ru)).cwiseQuotient(pt.wu));
      rhs.tail(me) = -rp;
      const Vec sol = kkt.solve(rhs, Vec::Zero(n + me), 3, 0.0);
      Dir d;
      d.dx = sol.head(n);
      d.dy = sol.tail(me);
      d.ds = -rg - r.G * d.dx;
      d.dz = (-rsz - pt.z.cwiseProduct(d.ds)).cwiseQuotient(pt.s);
      d.dwl = ml.cwiseProduct(d.dx + rl);
      d.dvl = ml.cwiseProduct((-rwl - pt.vl.cwiseProduct(d.dwl)).cwiseQuotient(pt.wl));
      d.dwu = mu.cwiseProduct(-ru - d.dx);
      d.dvu = mu.cwiseProduct((-rwu - pt.vu.cwiseProduct(d.dwu)).cwiseQuotient(pt.wu));
      return d;
    };
    auto max_step = [](const Vec& v, const Vec& dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
      return a;
    };
    auto step_limit = [&](const Dir& d) {
      return std::min({max_step(pt.s, d.ds), max_step(pt.z, d.dz), max_step(pt.wl, d.dwl),
                       max_step(pt.vl, d.dvl), max_step(pt.wu, d.dwu), max_step(pt.vu, d.dvu)});
    };

    const Vec wvl = ml.cwiseProduct(pt.wl.cwiseProduct(pt.vl));
    const Vec wvu = mu.cwiseProduct(pt.wu.cwiseProduct(pt.vu));
    const Dir aff = direction(pt.s.cwiseProduct(pt.z), wvl, wvu);
    const double a_aff = step_limit(aff);
    const double gap_aff = (pt.s + a_aff * aff.ds).dot(pt.z + a_aff * aff.dz) +
                           ml.dot((pt.wl + a_aff * aff.dwl).cwiseProduct(pt.vl + a_aff * aff.dvl)) +
                           mu.dot((pt.wu + a_aff * aff.dwu).cwiseProduct(pt.vu + a_aff * aff.dvu));
    const double sigma = std::pow(std::clamp(gap_aff / gap, 0.0, 1.0), 3);
    const double target = sigma * mu_avg;

    const Dir d = direction(pt.s.cwiseProduct(pt.z) + aff.ds.cwiseProduct(aff.dz) - Vec::Constant(mi, target),
                            wvl + ml.cwiseProduct(aff.dwl.cwiseProduct(aff.dvl) - Vec::Constant(n, target)),
                            wvu + mu.cwiseProduct(aff.dwu.cwiseProduct(aff.dvu) - Vec::Constant(n, target)));
    const double alpha = std::min(1.0, 0.99 * step_limit(d));
    if (!std::isfinite(alpha)) {
      res.status = IpmStatus::Stalled;
      return res;
    }
    if (alpha < 1e-10) {
      if (++tiny_steps >= 5) {
        res.status = primal > 1e-6 ? IpmStatus::Infeasible : IpmStatus::Stalled;
        return res;
      }
    } else {
      tiny_steps = 0;
    }
    pt.x += alpha * d.dx;
    pt.y += alpha * d.dy;
    pt.s += alpha * d.ds;
    pt.z += alpha * d.dz;
    pt.wl += alpha * d.dwl;
    pt.vl += alpha * d.dvl;
    pt.wu += alpha * d.dwu;
    pt.vu += alpha * d.dvu;
  }
  res.iterations = max_iter;
  res.status = IpmStatus::MaxIter;
  return res;
}

// ---- active-set polish ------------------------------------------------------

struct ActiveSet {
  std::vector<char> row;           // per reduced inequality row
  std::vector<signed char> bound;  // per reduced column: -1 lower, +1 upper, 0 free
};

struct PolishResult {
  bool ok = false;
  int rounds = 0;
  Vec x, y, z, vl, vu;
};

PolishResult polish(const Reduced& r, ActiveSet act, Vec x, Vec y, Vec z, double tol, int max_rounds) {
  const int n = r.n, me = static_cast<int>(r.b.size()), mi = static_cast<int>(r.h.size());
  const double ptol = 0.1 * tol, dtol = 0.1 * tol;
  const SpMat Gt = r.G.transpose();
  const SpMat At = r.A.transpose();
  PolishResult out;

  for (int round = 1; round <= max_rounds; ++round) {
    out.rounds = round;
    std::vector<int> free_cols, free_of(n, -1), active_rows;
    Vec xb = Vec::Zero(n);
    for (int j = 0; j < n; ++j) {
      if (act.bound[j] < 0)
        xb[j] = r.lo[j];
      else if (act.bound[j] > 0)
        xb[j] = r.hi[j];
      else {
        free_of[j] = static_cast<int>(free_cols.size());
        free_cols.push_back(j);
      }
    }
    for (int i = 0; i < mi; ++i)
      if (act.row[i]) active_rows.push_back(i);
    const int nf = static_cast<int>(free_cols.size());
    const int na = static_cast<int>(active_rows.size());

    // Restrict to free columns; bound columns move to the right-hand side.
    std::vector<Triplet> trip;
    for (int k = 0; k < r.P.outerSize(); ++k)
      for (SpMat::InnerIterator it(r.P, k); it; ++it)
        if (free_of[it.row()] >= 0 && free_of[it.col()] >= 0)
          trip.emplace_back(free_of[it.row()], free_of[it.col()], it.value());
    SpMat Pf(nf, nf);
    Pf.setFromTriplets(trip.begin(), trip.end());

    trip.clear();
    for (int k = 0; k < r.A.outerSize(); ++k)
      for (SpMat::InnerIterator it(r.A, k); it; ++it)
        if (free_of[it.col()] >= 0) trip.emplace_back(it.row(), free_of[it.col()], it.value());
    std::vector<int> row_of(mi, -1);
    for (int a = 0; a < na; ++a) row_of[active_rows[a]] = me + a;
    for (int k = 0; k < r.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(r.G, k); it; ++it)
        if (row_of[it.row()] >= 0 && free_of[it.col()] >= 0)
          trip.emplace_back(row_of[it.row()], free_of[it.col()], it.value());
    SpMat C(me + na, nf);
    C.setFromTriplets(trip.begin(), trip.end());

    const Vec qf_full = r.q + r.P * xb;
    const Vec Axb = r.A * xb, Gxb = r.G * xb;
    Vec rhs(nf + me + na);
    for (int k = 0; k < nf; ++k) rhs[k] = -qf_full[free_cols[k]];
    for (int i = 0; i < me; ++i) rhs[nf + i] = r.b[i] - Axb[i];
    for (int a = 0; a < na; ++a) rhs[nf + me + a] = r.h[active_rows[a]] - Gxb[active_rows[a]];

    Vec guess(nf + me + na);
    for (int k = 0; k < nf; ++k) guess[k] = x[free_cols[k]];
    guess.segment(nf, me) = y;
    for (int a = 0; a < na; ++a) guess[nf + me + a] = std::max(z[active_rows[a]], 0.0);

    KktSystem kkt;
    if (!kkt.factor(Pf, C, 1e-7)) return out;
    const Vec sol = kkt.solve(rhs, guess, 200, 1e-15 * (1.0 + inf_norm(rhs)));

    x = xb;
    for (int k = 0; k < nf; ++k) x[free_cols[k]] = sol[k];
    y = sol.segment(nf, me);
    z = Vec::Zero(mi);
    for (int a = 0; a < na; ++a) z[active_rows[a]] = sol[nf + me + a];

    const Vec g = r.P * x + r.q + At * y + Gt * z;
    Vec vl = Vec::Zero(n), vu = Vec::Zero(n);
    for (int j = 0; j < n; ++j) {
      if (act.bound[j] < 0) vl[j] = g[j];
      if (act.bound[j] > 0) vu[j] = -g[j];
    }

    bool changed = false;
    const Vec Gx = r.G * x;
    for (int i = 0; i < mi; ++i) {
      if (act.row[i] && z[i] < -dtol) {
        act.row[i] = 0;
        changed = true;
      } else if (!act.row[i] && Gx[i] - r.h[i] > ptol) {
        act.row[i] = 1;
        changed = true;
      }
    }
    for (int j = 0; j < n; ++j) {
      if ((act.bound[j] < 0 && vl[j] < -dtol) || (act.bound[j] > 0 && vu[j] < -dtol)) {
        act.bound[j] = 0;
        changed = true;
      } else if (act.bound[j] == 0 && x[j] < r.lo[j] - ptol) {
        act.bound[j] = -1;
        changed = true;
      } else if (act.bound[j] == 0 && x[j] > r.hi[j] + ptol) {
        act.bound[j] = 1;
        changed = true;
      }
    }
    if (!changed) {
      out.ok = x.allFinite() && y.allFinite() && z.allFinite();
      out.x = std::move(x);
      out.y = std::move(y);
      out.z = std::move(z);
      out.vl = std::move(vl);
      out.vu = std::move(vu);
      return out;
    }
  }
  return out;
}

// ---- mapping back to the original problem -----------------------------------

QpSolution expand(const QpProblem& p, const Reduced& r, const Vec& x, const Vec& y, const Vec& z, const Vec& vl,
                  const Vec& vu) {
  const auto& c = p.constraints;
  const int n = p.num_vars();
  QpSolution sol;
  sol.x = r.x_fixed;
  for (int k = 0; k < r.n; ++k) sol.x[r.cols[k]] = x[k];
  sol.y_eq = Vec::Zero(c.num_eq());
  for (std::size_t i = 0; i < r.eq_rows.size(); ++i) sol.y_eq[r.eq_rows[i]] = y[static_cast<Eigen::Index>(i)];
  sol.z_in = Vec::Zero(c.num_in());
  for (std::size_t i = 0; i < r.in_rows.size(); ++i) sol.z_in[r.in_rows[i]] = z[static_cast<Eigen::Index>(i)];
  sol.z_lower = Vec::Zero(n);
  sol.z_upper = Vec::Zero(n);
  for (int k = 0; k < r.n; ++k) {
    sol.z_lower[r.cols[k]] = vl[k];
    sol.z_upper[r.cols[k]] = vu[k];
  }
  // Fixed columns absorb the remaining stationarity residual.
  Vec signed_z = sol.z_in;
  for (int i = 0; i < c.num_in(); ++i) signed_z[i] *= sense_sign(c, i);
  const Vec g = p.P * sol.x + p.q + c.eq_matrix.transpose() * sol.y_eq + c.in_matrix.transpose() * signed_z;
  for (int j = 0; j < n; ++j) {
    if (!r.fixed[j]) continue;
    if (g[j] >= 0.0)
      sol.z_lower[j] = g[j];
    else
      sol.z_upper[j] = -g[j];
  }
  sol.objective = objective_value(p, sol.x);
  return sol;
}

ActiveSet active_from_ipm(const Reduced& r, const IpmPoint& pt) {
  ActiveSet act;
  act.row.resize(r.h.size());
  for (Eigen::Index i = 0; i < r.h.size(); ++i) act.row[i] = pt.z[i] > pt.s[i];
  act.bound.assign(r.n, 0);
  for (int j = 0; j < r.n; ++j) {
    if (std::isfinite(r.lo[j]) && pt.vl[j] > pt.wl[j]) act.bound[j] = -1;
    if (std::isfinite(r.hi[j]) && pt.vu[j] > pt.wu[j]) act.bound[j] = 1;
  }
  return act;
}

bool warm_polish(const QpProblem& p, const Reduced& r, const QpSolution& warm, double tol, QpSolution& out) {
  const auto& c = p.constraints;
  if (warm.x.size() != p.num_vars() || warm.y_eq.size() != c.num_eq() || warm.z_in.size() != c.num_in() ||
      warm.z_lower.size() != p.num_vars() || warm.z_upper.size() != p.num_vars())
    return false;
  ActiveSet act;
  Vec x(r.n), y(r.eq_rows.size()), z(r.in_rows.size());
  act.bound.assign(r.n, 0);
  for (int k = 0; k < r.n; ++k) {
    const int j = r.cols[k];
    x[k] = warm.x[j];
    if (warm.z_lower[j] > 0.0 || warm.x[j] == r.lo[k]) act.bound[k] = -1;
    if (warm.z_upper[j] > 0.0 || warm.x[j] == r.hi[k]) act.bound[k] = 1;
  }
  for (std::size_t i = 0; i < r.eq_rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = warm.y_eq[r.eq_rows[i]];
  act.row.resize(r.in_rows.size());
  for (std::size_t i = 0; i < r.in_rows.size(); ++i) {
    z[static_cast<Eigen::Index>(i)] = warm.z_in[r.in_rows[i]];
    act.row[i] = warm.z_in[r.in_rows[i]] > 0.0;
  }
  const PolishResult pr = polish(r, std::move(act), x, y, z, tol, 25);
  if (!pr.ok) return false;
  out = expand(p, r, pr.x, pr.y, pr.z, pr.vl, pr.vu);
  out.kkt = kkt_residuals(p, out);
  out.iterations = pr.rounds;
  out.polished = true;
  if (out.kkt.max() > tol) return false;
  out.status = Status::Optimal;
  return true;
}

}  // namespace

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::MaxIter: return "max-iter";
    case Status::Infeasible: return "infeasible";
  }
  return "?";
}

double KktResiduals::max() const { return std::max({stationarity, primal, complementarity, dual_infeasibility}); }

bool is_psd(const Eigen::MatrixXd& P, double shift) {
  if (P.rows() != P.cols()) return false;
  if (P.size() == 0) return true;
  if (!P.isApprox(P.transpose(), 1e-12) && (P - P.transpose()).lpNorm<Eigen::Infinity>() > 1e-12) return false;
  const double scale = std::max(1.0, P.diagonal().cwiseAbs().maxCoeff());
  Eigen::MatrixXd shifted = 0.5 * (P + P.transpose());
  shifted.diagonal().array() += shift * scale;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  return llt.info() == Eigen::Success;
}

void validate(const QpProblem& p) {
  const int n = p.num_vars();
  const auto& c = p.constraints;
  if (p.P.rows() != n || p.P.cols() != n) throw std::invalid_argument("qp: P is not n x n");
  if (c.num_vars != n || c.lower.size() != n || c.upper.size() != n)
    throw std::invalid_argument("qp: constraint set width differs from objective");
  if (c.eq_matrix.rows() != c.num_eq() || (c.num_eq() > 0 && c.eq_matrix.cols() != n))
    throw std::invalid_argument("qp: equality block has inconsistent dimensions");
  if (c.in_matrix.rows() != c.num_in() || (c.num_in() > 0 && c.in_matrix.cols() != n) ||
      static_cast<int>(c.in_sense.size()) != c.num_in())
    throw std::invalid_argument("qp: inequality block has inconsistent dimensions");
  if (!p.P.allFinite() || !p.q.allFinite()) throw std::invalid_argument("qp: non-finite objective data");
  if (!is_psd(p.P)) throw std::invalid_argument("qp: P is not symmetric positive semidefinite");
}

double objective_value(const QpProblem& p, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(p.P * x) + p.q.dot(x) + p.constant;
}

double max_violation(const QpProblem& p, const Eigen::VectorXd& x) {
  const auto& c = p.constraints;
  double v = 0.0;
  if (c.num_eq() > 0) v = std::max(v, inf_norm(c.eq_matrix * x - c.eq_rhs));
  if (c.num_in() > 0) {
    const Vec ax = c.in_matrix * x;
    for (int i = 0; i < c.num_in(); ++i) v = std::max(v, sense_sign(c, i) * (ax[i] - c.in_rhs[i]));
  }
  for (int j = 0; j < p.num_vars(); ++j) v = std::max({v, c.lower[j] - x[j], x[j] - c.upper[j]});
  return v;
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& sol) {
  const auto& c = p.constraints;
  const int n = p.num_vars();
  if (sol.x.size() != n || sol.y_eq.size() != c.num_eq() || sol.z_in.size() != c.num_in() ||
      sol.z_lower.size() != n || sol.z_upper.size() != n)
    throw std::invalid_argument("kkt_residuals: solution dimensions do not match problem");
  KktResiduals k;
  Vec signed_z = sol.z_in;
  for (int i = 0; i < c.num_in(); ++i) signed_z[i] *= sense_sign(c, i);
  Vec g = p.P * sol.x + p.q - sol.z_lower + sol.z_upper;
  if (c.num_eq() > 0) g += c.eq_matrix.transpose() * sol.y_eq;
  if (c.num_in() > 0) g += c.in_matrix.transpose() * signed_z;
  k.stationarity = inf_norm(g);
  k.primal = max_violation(p, sol.x);

  if (c.num_in() > 0) {
    const Vec ax = c.in_matrix * sol.x;
    for (int i = 0; i < c.num_in(); ++i) {
      const double slack = sense_sign(c, i) * (c.in_rhs[i] - ax[i]);
      k.complementarity = std::max(k.complementarity, std::abs(sol.z_in[i] * slack));
      k.dual_infeasibility = std::max(k.dual_infeasibility, -sol.z_in[i]);
    }
  }
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(c.lower[j]))
      k.complementarity = std::max(k.complementarity, std::abs(sol.z_lower[j] * (sol.x[j] - c.lower[j])));
    else
      k.dual_infeasibility = std::max(k.dual_infeasibility, std::abs(sol.z_lower[j]));
    if (std::isfinite(c.upper[j]))
      k.complementarity = std::max(k.complementarity, std::abs(sol.z_upper[j] * (c.upper[j] - sol.x[j])));
    else
      k.dual_infeasibility = std::max(k.dual_infeasibility, std::abs(sol.z_upper[j]));
    k.dual_infeasibility = std::max({k.dual_infeasibility, -sol.z_lower[j], -sol.z_upper[j]});
  }
  return k;
}

QpSolution solve_qp(const QpProblem& p, double tol, int max_iter) {
  QpOptions o;
  o.tol = tol;
  o.max_iter = max_iter;
  return solve_qp(p, o);
}

QpSolution solve_qp(const QpProblem& p, const QpOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("solve_qp: tol must be positive");
  if (options.max_iter < 1) throw std::invalid_argument("solve_qp: max_iter must be positive");
  validate(p);
  const auto& c = p.constraints;
  const int n = p.num_vars();

  Reduced r;
  if (!presolve(p, options.tol, r)) {
    QpSolution sol;
    sol.x = c.lower.cwiseMax(c.upper.cwiseMin(Vec::Zero(n))).unaryExpr([](double v) {
      return std::isfinite(v) ? v : 0.0;
    });
    sol.y_eq = Vec::Zero(c.num_eq());
    sol.z_in = Vec::Zero(c.num_in());
    sol.z_lower = Vec::Zero(n);
    sol.z_upper = Vec::Zero(n);
    sol.status = Status::Infeasible;
    sol.objective = objective_value(p, sol.x);
    sol.kkt = kkt_residuals(p, sol);
    return sol;
  }

  if (options.warm_start != nullptr) {
    QpSolution warm;
    if (warm_polish(p, r, *options.warm_start, options.tol, warm)) return warm;
  }

  const IpmResult ipm = interior_point(r, options.max_iter);
  const IpmPoint& pt = ipm.pt;
  QpSolution best = expand(p, r, pt.x, pt.y, pt.z, pt.vl.cwiseProduct(r.lo.unaryExpr([](double v) {
                                                      return std::isfinite(v) ? 1.0 : 0.0;
                                                    })),
                           pt.vu.cwiseProduct(r.hi.unaryExpr([](double v) { return std::isfinite(v) ? 1.0 : 0.0; })));
  best.kkt = kkt_residuals(p, best);
  best.iterations = ipm.iterations;

  if (ipm.status == IpmStatus::Infeasible) {
    best.status = Status::Infeasible;
    return best;
  }

  const int budget = std::max(1, options.max_iter - ipm.iterations);
  const PolishResult pr = polish(r, active_from_ipm(r, pt), pt.x, pt.y, pt.z, options.tol, std::min(budget, 50));
  if (pr.ok) {
    QpSolution polished = expand(p, r, pr.x, pr.y, pr.z, pr.vl, pr.vu);
    polished.kkt = kkt_residuals(p, polished);
    polished.iterations = ipm.iterations + pr.rounds;
    polished.polished = true;
    if (polished.kkt.max() < best.kkt.max()) best = std::move(polished);
  }
  best.status = best.kkt.max() <= options.tol ? Status::Optimal : Status::MaxIter;
  return best;
}

void dump_csv(const QpProblem& p, std::ostream& out) {
  const auto& c = p.constraints;
  const int n = p.num_vars();
  out.precision(17);
  auto row = [&](auto&& get, int cols) {
    for (int j = 0; j < cols; ++j) out << (j ? "," : "") << get(j);
    out << '\n';
  };
  out << "# P\n";
  for (int i = 0; i < n; ++i) row([&](int j) { return p.P(i, j); }, n);
  out << "# q\n";
  row([&](int j) { return p.q[j]; }, n);
  out << "# A_eq|b_eq\n";
  for (int i = 0; i < c.num_eq(); ++i) {
    for (int j = 0; j < n; ++j) out << c.eq_matrix(i, j) << ',';
    out << c.eq_rhs[i] << '\n';
  }
  out << "# A_in|b_in\n";
  for (int i = 0; i < c.num_in(); ++i) {
    const double sign = sense_sign(c, i);
    for (int j = 0; j < n; ++j) out << sign * c.in_matrix(i, j) << ',';
    out << sign * c.in_rhs[i] << '\n';
  }
  out << "# bounds\n";
  for (int j = 0; j < n; ++j) out << c.lower[j] << ',' << c.upper[j] << '\n';
}

}  // namespace gridledger::qp

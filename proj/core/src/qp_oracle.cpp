#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gridledger/qp.hpp"

namespace gridledger::qp {

std::optional<OracleResult> grid_oracle(const QpProblem& p, const GridBox& box, int resolution, double feas_tol) {
  const int n = p.num_vars();
  if (n > kOracleMaxDim) throw std::invalid_argument("grid_oracle: dimension " + std::to_string(n) + " exceeds limit");
  if (box.lower.size() != n || box.upper.size() != n) throw std::invalid_argument("grid_oracle: box dimension mismatch");
  if (resolution < 2) throw std::invalid_argument("grid_oracle: resolution must be at least 2");
  for (int j = 0; j < n; ++j)
    if (!std::isfinite(box.lower[j]) || !std::isfinite(box.upper[j]) || box.lower[j] > box.upper[j])
      throw std::invalid_argument("grid_oracle: box must be bounded");

  std::optional<OracleResult> best;
  std::vector<int> idx(n, 0);
  Eigen::VectorXd x(n);
  long long total = 1;
  for (int j = 0; j < n; ++j) total *= resolution;
  long long feasible = 0;
  for (long long count = 0; count < total; ++count) {
    for (int j = 0; j < n; ++j)
      x[j] = box.lower[j] + (box.upper[j] - box.lower[j]) * idx[j] / static_cast<double>(resolution - 1);
    if (max_violation(p, x) <= feas_tol) {
      ++feasible;
      const double v = objective_value(p, x);
      if (!best || v < best->value) best = OracleResult{x, v, 0};
    }
    for (int j = 0; j < n; ++j) {
      if (++idx[j] < resolution) break;
      idx[j] = 0;
    }
  }
  if (best) best->feasible_points = feasible;
  return best;
}

}  // namespace gridledger::qp

#include "corl/continual/projection.hpp"

#include <limits>
#include <stdexcept>

#include "corl/error.hpp"

namespace corl::continual {

Eigen::VectorXd project_agem(const Eigen::VectorXd& g, const Eigen::VectorXd& ref) {
  if (g.size() != ref.size()) throw ShapeError("agem: gradient sizes differ");
  const double dot = g.dot(ref);
  const double rr = ref.squaredNorm();
  if (dot >= 0.0 || rr == 0.0) return g;
  return g - (dot / rr) * ref;
}

Eigen::VectorXd project_gem(const Eigen::VectorXd& g, const std::vector<Eigen::VectorXd>& memories) {
  std::vector<Eigen::VectorXd> rows;
  for (const auto& m : memories) {
    if (m.size() != g.size()) throw ShapeError("gem: gradient sizes differ");
    if (m.squaredNorm() > 0.0) rows.push_back(m);
  }
  const int k = static_cast<int>(rows.size());
  bool feasible = true;
  for (const auto& r : rows) feasible = feasible && g.dot(r) >= 0.0;
  if (feasible) return g;
  if (k == 1) return project_agem(g, rows[0]);
  if (k > 20) throw std::invalid_argument("gem: too many memory gradients for exact enumeration");

  Eigen::MatrixXd gm(k, g.size());
  for (int j = 0; j < k; ++j) gm.row(j) = rows[static_cast<std::size_t>(j)].transpose();
  const Eigen::MatrixXd gram = gm * gm.transpose();
  const Eigen::VectorXd lin = gm * g;  // G g
  const double tol = 1e-12 * (1.0 + lin.cwiseAbs().maxCoeff());

  // Each active set S fixes v_i = 0 off S and solves the stationarity system on S.
  Eigen::VectorXd best_v;
  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd fallback_v;
  double fallback_violation = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    std::vector<int> s;
    for (int j = 0; j < k; ++j)
      if (mask & (1u << j)) s.push_back(j);
    const auto m = static_cast<Eigen::Index>(s.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd a(m, m);
    Eigen::VectorXd b(m);
    for (Eigen::Index p = 0; p < m; ++p) {
      b(p) = -lin(s[p]);
      for (Eigen::Index q = 0; q < m; ++q) a(p, q) = gram(s[p], s[q]);
    }
    const Eigen::VectorXd vs = a.completeOrthogonalDecomposition().solve(b);
    for (Eigen::Index p = 0; p < m; ++p) v(s[p]) = vs(p);
    const Eigen::VectorXd slack = gram * v + lin;  // <g~, g_j>
    const double violation = std::max((-v).maxCoeff(), (-slack).maxCoeff());
    if (violation <= tol) {
      const double obj = 0.5 * v.dot(gram * v) + lin.dot(v);
      if (obj < best_obj) {
        best_obj = obj;
        best_v = v;
      }
    } else if (violation < fallback_violation) {
      fallback_violation = violation;
      fallback_v = v;
    }
  }
  const Eigen::VectorXd& v = best_v.size() ? best_v : fallback_v;
  return g + gm.transpose() * v.cwiseMax(0.0);
}

}  // namespace corl::continual

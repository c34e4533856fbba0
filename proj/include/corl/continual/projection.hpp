#pragma once

#include <vector>

#include <Eigen/Dense>

namespace corl::continual {

// g - (<g, ref> / <ref, ref>) ref when <g, ref> < 0; g otherwise, and also
// when ref is zero.
Eigen::VectorXd project_agem(const Eigen::VectorXd& g, const Eigen::VectorXd& ref);

// Closest vector to g with <g~, g_j> >= 0 for every memory row, via the dual
// QP min_{v >= 0} 1/2 v'GG'v + g'G'v solved by active-set enumeration.
Eigen::VectorXd project_gem(const Eigen::VectorXd& g, const std::vector<Eigen::VectorXd>& memories);

}  // namespace corl::continual

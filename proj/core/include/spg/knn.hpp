#pragma once

#include <Eigen/Core>

namespace spg {

/// Distance from each row of `points` to its k-th nearest neighbor among the
/// other rows (the point itself is excluded by index).
Eigen::VectorXd kth_neighbor_within(const Eigen::MatrixXd& points, int k);

/// Distance from each row of `queries` to its k-th nearest neighbor among the
/// rows of `refs`.
Eigen::VectorXd kth_neighbor_cross(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& refs,
                                   int k);

/// Reference sets up to this many rows are searched by brute force; larger
/// sets go through a k-d tree. High dimensions degrade tree pruning but never
/// its exactness.
inline constexpr int kBruteForceLimit = 2000;

}  // namespace spg

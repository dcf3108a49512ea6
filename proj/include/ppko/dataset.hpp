#pragma once

#include "ppko/common.hpp"
#include "ppko/errors.hpp"

namespace ppko {

/// One training snapshot (x, u, x_plus, theta); u is empty for autonomous data.
struct Snapshot {
  Vec x;
  Vec u;
  Vec x_plus;
  Vec theta;
};

/// Column-oriented snapshot storage. Column j of X/U/Xp/Theta is snapshot j;
/// traj[j] identifies the source trajectory (used for leakage-free splits).
struct Dataset {
  int n_x = 0;
  int n_u = 0;
  int d = 0;

  Mat X;
  Mat U;
  Mat Xp;
  Mat Theta;
  Eigen::VectorXi traj;

  Eigen::Index size() const { return X.cols(); }
  int trajectory_count() const { return traj.size() == 0 ? 0 : traj.maxCoeff() + 1; }

  Snapshot snapshot(Eigen::Index j) const {
    return Snapshot{X.col(j), n_u > 0 ? Vec(U.col(j)) : Vec(0), Xp.col(j), Theta.col(j)};
  }

  void resize(int nx, int nu, int dim, Eigen::Index count) {
    n_x = nx;
    n_u = nu;
    d = dim;
    X.resize(nx, count);
    U.resize(nu, count);
    Xp.resize(nx, count);
    Theta.resize(dim, count);
    traj.resize(count);
  }

  /// Returns the sub-dataset made of the given snapshot columns.
  Dataset select(const std::vector<Eigen::Index>& cols) const;

  void check_finite() const {
    if (!X.allFinite() || !Xp.allFinite() || !Theta.allFinite() || (n_u > 0 && !U.allFinite()))
      throw ContractError("Dataset: non-finite entries");
  }
};

}  // namespace ppko

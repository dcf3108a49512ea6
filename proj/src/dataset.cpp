#include "ppko/dataset.hpp"

namespace ppko {

Dataset Dataset::select(const std::vector<Eigen::Index>& cols) const {
  Dataset out;
  out.resize(n_x, n_u, d, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const Eigen::Index j = cols[i];
    const Eigen::Index k = static_cast<Eigen::Index>(i);
    out.X.col(k) = X.col(j);
    if (n_u > 0) out.U.col(k) = U.col(j);
    out.Xp.col(k) = Xp.col(j);
    out.Theta.col(k) = Theta.col(j);
    out.traj[k] = traj[j];
  }
  return out;
}

}  // namespace ppko

#include "oracles.hpp"

#include <cmath>

namespace ppko::oracles {

Vec fd_gradient(Dictionary dict, const EdmdBatch& batch, double step) {
  const Eigen::Index n = dict.param_count();
  Vec base = dict.params();
  Vec grad(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec p = base;
    p[i] = base[i] + step;
    dict.set_params(p);
    const double up = edmd_loss(dict, batch);
    p[i] = base[i] - step;
    dict.set_params(p);
    const double down = edmd_loss(dict, batch);
    grad[i] = (up - down) / (2.0 * step);
  }
  dict.set_params(base);
  return grad;
}

double uniform_moment(int k) {
  if (k % 2 == 1) return 0.0;
  return 1.0 / (k + 1.0);
}

double gaussian_moment(int k) {
  if (k % 2 == 1) return 0.0;
  double m = 1.0;  // (k-1)!!
  for (int i = k - 1; i > 1; i -= 2) m *= i;
  return m;
}

PpkoModel make_inclass_model(std::mt19937_64& rng, int n_x, int n_u, const PceBasis& basis,
                             double spectral_radius) {
  const int n_psi = 1 + n_x;
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto randn = [&](Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = gauss(rng);
    return m;
  };

  PpkoModel model{basis, Dictionary(n_x, 0, {}, 0), {}, {},
                  PpkoModel::output_matrix(n_x, n_psi)};
  const auto n_k = basis.size();
  for (std::size_t k = 0; k < n_k; ++k) {
    Mat A = Mat::Zero(n_psi, n_psi);
    Mat S = randn(n_x, n_x);
    const double rho = S.eigenvalues().cwiseAbs().maxCoeff();
    // Dominant constant block at the requested radius, small higher terms.
    const double target = k == 0 ? spectral_radius : 0.3 * spectral_radius / static_cast<double>(n_k);
    A.bottomRightCorner(n_x, n_x) = S * (target / std::max(rho, 1e-12));
    A.block(1, 0, n_x, 1) = 0.1 * randn(n_x, 1);  // affine drift through z[0]=1
    if (k == 0) A(0, 0) = 1.0;                    // preserves the constant observable
    model.A_coeffs.push_back(std::move(A));

    Mat B = Mat::Zero(n_psi, n_u);
    if (n_u > 0) B.bottomRows(n_x) = randn(n_x, n_u);
    model.B_coeffs.push_back(std::move(B));
  }
  model.check_consistent();
  return model;
}

Dataset sample_inclass_data(const PpkoModel& model, std::mt19937_64& rng, Eigen::Index count) {
  const int n_x = model.n_x();
  const int n_u = model.n_u();
  const int d = model.basis.dim();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset data;
  data.resize(n_x, n_u, d, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    Vec x(n_x), u(std::max(n_u, 0)), theta(d);
    for (int i = 0; i < n_x; ++i) x[i] = gauss(rng);
    for (int i = 0; i < n_u; ++i) u[i] = gauss(rng);
    for (int i = 0; i < d; ++i) {
      const auto& fam = model.basis.families()[static_cast<std::size_t>(i)];
      theta[i] = fam.kind() == PolyKind::Legendre
                     ? fam.param_lo() + (fam.param_hi() - fam.param_lo()) * unit(rng)
                     : fam.to_physical(gauss(rng));
    }
    const Vec z = model.dict.lift(x);
    const Vec zp = model.step(z, u, theta);
    data.X.col(j) = x;
    if (n_u > 0) data.U.col(j) = u;
    data.Xp.col(j) = zp.segment(1, n_x);
    data.Theta.col(j) = theta;
    data.traj[j] = static_cast<int>(j % 7);  // arbitrary grouping
  }
  return data;
}

double coeff_distance(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]).squaredNorm();
  return std::sqrt(s);
}

Vec box_qp_projected_gradient(const Mat& P, const Vec& q, const Vec& lo, const Vec& hi,
                              double tol, int max_iter) {
  const Mat P2 = P + P.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(P2, Eigen::EigenvaluesOnly);
  const double L = std::max(es.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / L;
  Vec v = lo.cwiseMax(Vec::Zero(q.size()).cwiseMin(hi));
  for (int it = 0; it < max_iter; ++it) {
    const Vec g = P2 * v + 2.0 * q;
    const Vec next = (v - step * g).cwiseMax(lo).cwiseMin(hi);
    const double move = (next - v).lpNorm<Eigen::Infinity>();
    v = next;
    if (move <= tol) break;
  }
  return v;
}

namespace {

// solves the equality-constrained QP: min v'Pv + 2q'v s.t. G_A v = h_A
bool solve_kkt(const Mat& P, const Vec& q, const Mat& GA, const Vec& hA, Vec& v, Vec& mult) {
  const Eigen::Index n = q.size();
  const Eigen::Index m = GA.rows();
  Mat K(n + m, n + m);
  K.setZero();
  K.topLeftCorner(n, n) = P + P.transpose();
  if (m > 0) {
    K.topRightCorner(n, m) = GA.transpose();
    K.bottomLeftCorner(m, n) = GA;
  }
  Vec rhs(n + m);
  rhs.head(n) = -2.0 * q;
  rhs.tail(m) = hA;
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible()) return false;
  const Vec sol = lu.solve(rhs);
  v = sol.head(n);
  mult = sol.tail(m);
  return true;
}

}  // namespace

Vec active_set_qp(const Mat& P, const Vec& q, const Mat& G, const Vec& h) {
  const Eigen::Index n = q.size();
  const Eigen::Index m = G.rows();
  double best = std::numeric_limits<double>::infinity();
  Vec best_v;

  // Enumerate all active subsets of size <= n.
  for (std::uint64_t mask = 0; mask < (1ULL << m); ++mask) {
    const int active = __builtin_popcountll(mask);
    if (active > n) continue;
    Mat GA(active, n);
    Vec hA(active);
    int at = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (mask & (1ULL << i)) {
        GA.row(at) = G.row(i);
        hA[at] = h[i];
        ++at;
      }
    Vec v, mult;
    if (!solve_kkt(P, q, GA, hA, v, mult)) continue;
    if (((G * v - h).array() > 1e-9).any()) continue;        // primal feasible
    if (active > 0 && (mult.array() < -1e-9).any()) continue;  // dual feasible
    const double obj = v.dot(P * v) + 2.0 * q.dot(v);
    if (obj < best) {
      best = obj;
      best_v = v;
    }
  }
  if (best_v.size() == 0) throw NumericError("active_set_qp: no KKT point found");
  return best_v;
}

double grid_qcqp_objective(const ProgramInstance& inst, const Vec& lo, const Vec& hi) {
  auto feasible = [&](const Vec& v) {
    return inst.linear_violation(v) <= 0.0 && inst.quad_violation(v) <= 0.0;
  };
  Vec center = 0.5 * (lo + hi);
  Vec half = 0.5 * (hi - lo);
  double best = std::numeric_limits<double>::infinity();
  Vec best_v = center;

  int points = 2001;
  for (int round = 0; round < 7; ++round) {
    for (int i = 0; i < points; ++i) {
      for (int j = 0; j < points; ++j) {
        Vec v(2);
        v[0] = center[0] - half[0] + 2.0 * half[0] * i / (points - 1);
        v[1] = center[1] - half[1] + 2.0 * half[1] * j / (points - 1);
        if (!feasible(v)) continue;
        const double obj = inst.objective(v);
        if (obj < best) {
          best = obj;
          best_v = v;
        }
      }
    }
    // local polish: re-grid a generous neighborhood of the incumbent (the
    // nearest feasible grid point can sit a few cells from the optimum when
    // the boundary is curved)
    center = best_v;
    const double res = 2.0 * half.maxCoeff() / (points - 1);
    half.setConstant(20.0 * res);
    points = 401;
  }
  return best;
}

}  // namespace ppko::oracles

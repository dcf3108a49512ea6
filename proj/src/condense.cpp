#include "ppko/condense.hpp"

#include <cmath>

namespace ppko {

namespace {

bool is_psd(const Mat& S, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace

void SmpcSpec::validate(int n_x, int n_u) const {
  if (horizon < 1) throw ContractError("SmpcSpec: horizon must be >= 1");
  if (Q.rows() != n_x || Q.cols() != n_x) throw ContractError("SmpcSpec: Q must be n_x x n_x");
  if (Q_f.rows() != n_x || Q_f.cols() != n_x) throw ContractError("SmpcSpec: Q_f must be n_x x n_x");
  if (R.rows() != n_u || R.cols() != n_u) throw ContractError("SmpcSpec: R must be n_u x n_u");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      (Q_f - Q_f.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ContractError("SmpcSpec: weight matrices must be symmetric");
  if (!is_psd(Q, 1e-10) || !is_psd(Q_f, 1e-10))
    throw ContractError("SmpcSpec: Q and Q_f must be PSD");
  if (Eigen::LLT<Mat>(R).info() != Eigen::Success)
    throw ContractError("SmpcSpec: R must be positive definite");
  if (x_min.size() > 0 && (x_min.rows() != n_x || x_min.cols() != horizon))
    throw ContractError("SmpcSpec: x_min must be n_x x horizon when present");
  if (x_max.size() > 0 && (x_max.rows() != n_x || x_max.cols() != horizon))
    throw ContractError("SmpcSpec: x_max must be n_x x horizon when present");
  for (const auto& mc : moment_constraints) {
    if (mc.t < 1 || mc.t > horizon)
      throw ContractError("SmpcSpec: moment constraint time outside 1..H");
    if (mc.a.size() != n_x) throw ContractError("SmpcSpec: moment constraint direction size");
    if (!(mc.c > 0.0)) throw ContractError("SmpcSpec: moment constraint bound must be positive");
  }
  if (u_min.size() != n_u || u_max.size() != n_u)
    throw ContractError("SmpcSpec: input bounds must have size n_u");
  for (int i = 0; i < n_u; ++i)
    if (!(u_min[i] <= u_max[i])) throw ContractError("SmpcSpec: requires u_min <= u_max");
}

void build_EF(const PpkoModel& model, int horizon, const Vec& theta, Mat& E, Mat& F) {
  if (horizon < 1) throw ContractError("build_EF: horizon must be >= 1");
  const int n_x = model.n_x();
  const int n_u = model.n_u();
  const int n_psi = model.n_psi();

  const Mat A = model.A_at(theta);
  const Mat B = n_u > 0 ? model.B_at(theta) : Mat(n_psi, 0);

  E.resize(horizon * n_x, n_psi);
  F.setZero(horizon * n_x, horizon * n_u);

  // CA_pow[m] = C A^{m+1}; CAB[m] = C A^m B.
  Mat CA = model.C;  // C A^0
  std::vector<Mat> CAB(static_cast<std::size_t>(horizon));
  for (int m = 0; m < horizon; ++m) {
    if (n_u > 0) CAB[static_cast<std::size_t>(m)] = CA * B;
    CA = CA * A;
    E.middleRows(m * n_x, n_x) = CA;
  }
  if (n_u > 0)
    for (int t = 1; t <= horizon; ++t)
      for (int s = 0; s < t; ++s)
        F.block((t - 1) * n_x, s * n_u, n_x, n_u) = CAB[static_cast<std::size_t>(t - 1 - s)];
}

CondensedProblem condense(const PpkoModel& model, const SmpcSpec& spec,
                          const QuadratureRule& quad) {
  model.check_consistent();
  spec.validate(model.n_x(), model.n_u());
  if (model.n_u() < 1) throw ContractError("condense: model has no inputs to optimize over");
  for (Eigen::Index qn = 0; qn < quad.count(); ++qn)
    if (!model.basis.in_support(quad.node(qn)))
      throw ContractError("condense: quadrature node outside the parameter support");

  const int H = spec.horizon;
  const int n_x = model.n_x();
  const int n_u = model.n_u();
  const int n_psi = model.n_psi();
  const Eigen::Index nU = static_cast<Eigen::Index>(H) * n_u;
  const Eigen::Index nX = static_cast<Eigen::Index>(H) * n_x;

  // Qbar = blkdiag(Q, ..., Q, Q_f) over the stacked states x_1..x_H.
  Mat Qbar = Mat::Zero(nX, nX);
  for (int t = 0; t < H - 1; ++t) Qbar.block(t * n_x, t * n_x, n_x, n_x) = spec.Q;
  Qbar.block((H - 1) * n_x, (H - 1) * n_x, n_x, n_x) = spec.Q_f;
  Mat Rbar = Mat::Zero(nU, nU);
  for (int t = 0; t < H; ++t) Rbar.block(t * n_u, t * n_u, n_u, n_u) = spec.R;

  CondensedProblem cp;
  cp.horizon = H;
  cp.n_x = n_x;
  cp.n_u = n_u;
  cp.n_psi = n_psi;
  cp.H = Mat::Zero(nU, nU);
  cp.W_gE = Mat::Zero(nU, n_psi);
  cp.W_EE = Mat::Zero(n_psi, n_psi);
  cp.E_bar = Mat::Zero(nX, n_psi);
  cp.F_bar = Mat::Zero(nX, nU);
  for (const auto& mc : spec.moment_constraints) {
    CondensedProblem::CondensedMoment cm;
    cm.source = mc;
    cm.M = Mat::Zero(n_psi + nU, n_psi + nU);
    cm.c = Vec::Zero(n_psi + nU);
    cp.moments.push_back(std::move(cm));
  }

  Mat E, F;
  for (Eigen::Index qn = 0; qn < quad.count(); ++qn) {
    const double w = quad.weights[qn];
    build_EF(model, H, quad.node(qn), E, F);
    const Mat QbarF = Qbar * F;
    cp.H.noalias() += w * F.transpose() * QbarF;
    cp.W_gE.noalias() += w * QbarF.transpose() * E;
    cp.W_EE.noalias() += w * E.transpose() * Qbar * E;
    cp.E_bar.noalias() += w * E;
    cp.F_bar.noalias() += w * F;

    for (auto& cm : cp.moments) {
      const int t = cm.source.t;
      // G_t(theta) = [E_t(theta) F_t(theta)], the t-th block row.
      Vec aG(n_psi + nU);
      aG.head(n_psi) = E.middleRows((t - 1) * n_x, n_x).transpose() * cm.source.a;
      aG.tail(nU) = F.middleRows((t - 1) * n_x, n_x).transpose() * cm.source.a;
      cm.M.noalias() += w * aG * aG.transpose();
      cm.c.noalias() += w * aG;
    }
  }

  cp.H += Rbar;
  cp.H = 0.5 * (cp.H + cp.H.transpose()).eval();
  cp.W_EE = 0.5 * (cp.W_EE + cp.W_EE.transpose()).eval();
  for (auto& cm : cp.moments) cm.M = 0.5 * (cm.M + cm.M.transpose()).eval();

  cp.x_min = spec.x_min;
  cp.x_max = spec.x_max;
  cp.u_min = spec.u_min;
  cp.u_max = spec.u_max;
  return cp;
}

ProgramInstance instantiate(const CondensedProblem& cp, const Vec& z0) {
  if (z0.size() != cp.n_psi) throw ContractError("instantiate: z0 size != n_psi");
  const Eigen::Index nU = cp.decision_dim();

  ProgramInstance inst;
  inst.P = cp.H;
  inst.q = cp.W_gE * z0;
  inst.r = z0.dot(cp.W_EE * z0);

  // Linear rows: finite mean-state bounds, then the input box.
  std::vector<Vec> rows;
  std::vector<double> rhs;
  const bool have_bounds = cp.x_min.size() > 0 || cp.x_max.size() > 0;
  if (have_bounds) {
    for (int t = 0; t < cp.horizon; ++t) {
      const Mat Fb = cp.F_bar.middleRows(t * cp.n_x, cp.n_x);
      const Vec mean_z = cp.E_bar.middleRows(t * cp.n_x, cp.n_x) * z0;
      for (int i = 0; i < cp.n_x; ++i) {
        if (cp.x_max.size() > 0 && std::isfinite(cp.x_max(i, t))) {
          rows.push_back(Fb.row(i).transpose());
          rhs.push_back(cp.x_max(i, t) - mean_z[i]);
        }
        if (cp.x_min.size() > 0 && std::isfinite(cp.x_min(i, t))) {
          rows.push_back(-Fb.row(i).transpose());
          rhs.push_back(mean_z[i] - cp.x_min(i, t));
        }
      }
    }
  }
  for (Eigen::Index j = 0; j < nU; ++j) {
    const int iu = static_cast<int>(j % cp.n_u);
    if (std::isfinite(cp.u_max[iu])) {
      Vec e = Vec::Zero(nU);
      e[j] = 1.0;
      rows.push_back(std::move(e));
      rhs.push_back(cp.u_max[iu]);
    }
    if (std::isfinite(cp.u_min[iu])) {
      Vec e = Vec::Zero(nU);
      e[j] = -1.0;
      rows.push_back(std::move(e));
      rhs.push_back(-cp.u_min[iu]);
    }
  }
  inst.G.resize(static_cast<Eigen::Index>(rows.size()), nU);
  inst.h.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    inst.G.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    inst.h[static_cast<Eigen::Index>(i)] = rhs[i];
  }

  // Second-moment constraints reduced over the fixed z0 block:
  //   U' M_UU U + 2 (M_zU' z0 - b c_U)' U
  //     + z0' M_zz z0 - 2 b c_z' z0 + b^2 - c^2 <= 0.
  for (const auto& cm : cp.moments) {
    const auto n_psi = static_cast<Eigen::Index>(cp.n_psi);
    const Mat M_zz = cm.M.topLeftCorner(n_psi, n_psi);
    const Mat M_zU = cm.M.topRightCorner(n_psi, nU);
    const Mat M_UU = cm.M.bottomRightCorner(nU, nU);
    const Vec c_z = cm.c.head(n_psi);
    const Vec c_U = cm.c.tail(nU);
    const double b = cm.source.b;
    ProgramInstance::QuadConstraint qc;
    qc.P = M_UU;
    qc.q = M_zU.transpose() * z0 - b * c_U;
    qc.r = z0.dot(M_zz * z0) - 2.0 * b * c_z.dot(z0) + b * b - cm.source.c * cm.source.c;
    inst.quad.push_back(std::move(qc));
  }

  if (inst.dim() != cp.decision_dim())
    throw NumericError("instantiate: decision dimension is not H * n_u");
  return inst;
}

}  // namespace ppko

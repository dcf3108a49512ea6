#include "ppko/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace ppko {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double psd_floor(const Mat& S) {
  if (S.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

double ProgramInstance::linear_violation(const Vec& v) const {
  if (G.rows() == 0) return 0.0;
  return std::max(0.0, (G * v - h).maxCoeff());
}

double ProgramInstance::quad_violation(const Vec& v) const {
  double worst = 0.0;
  for (const auto& c : quad)
    worst = std::max(worst, v.dot(c.P * v) + 2.0 * c.q.dot(v) + c.r);
  return std::max(0.0, worst);
}

void ProgramInstance::check() const {
  const Eigen::Index n = dim();
  if (P.cols() != n || q.size() != n) throw ContractError("ProgramInstance: objective dims");
  if (G.rows() != h.size() || (G.rows() > 0 && G.cols() != n))
    throw ContractError("ProgramInstance: linear constraint dims");
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if (psd_floor(0.5 * (P + P.transpose())) < -1e-9 * scale)
    throw ContractError("ProgramInstance: objective matrix not PSD");
  for (const auto& c : quad) {
    if (c.P.rows() != n || c.P.cols() != n || c.q.size() != n)
      throw ContractError("ProgramInstance: quadratic constraint dims");
    const double cs = std::max(1.0, c.P.cwiseAbs().maxCoeff());
    if (psd_floor(0.5 * (c.P + c.P.transpose())) < -1e-9 * cs)
      throw ContractError("ProgramInstance: quadratic constraint matrix not PSD");
  }
}

// ---------------------------------------------------------------------------
// Operator-splitting QP
// ---------------------------------------------------------------------------

Solution solve_qp(const ProgramInstance& inst, const WarmStart* warm,
                  const SolverSettings& settings) {
  const auto t_start = Clock::now();
  if (!inst.quad.empty())
    throw ContractError("solve_qp: instance has quadratic constraints; use solve_qcqp");

  const Eigen::Index n = inst.dim();
  const Eigen::Index m = inst.G.rows();
  const Mat P2 = inst.P + inst.P.transpose();  // Hessian of v'Pv + 2q'v
  const Vec q2 = 2.0 * inst.q;

  Solution sol;
  sol.v = Vec::Zero(n);

  if (m == 0) {
    Eigen::LDLT<Mat> ldlt(P2 + 1e-12 * Mat::Identity(n, n));
    sol.v = ldlt.solve(-q2);
    sol.dual = Vec(0);
    sol.objective = inst.objective(sol.v);
    sol.dual_residual = (P2 * sol.v + q2).lpNorm<Eigen::Infinity>();
    sol.status = sol.dual_residual <= settings.eps_abs ? SolveStatus::Optimal : SolveStatus::MaxIter;
    sol.iterations = 1;
    sol.wall_time_s = seconds_since(t_start);
    return sol;
  }

  double rho = settings.rho;
  const double sigma = settings.sigma;
  const double alpha = settings.over_relaxation;

  Vec x = (warm && warm->v.size() == n) ? warm->v : Vec::Zero(n);
  Vec y = (warm && warm->y.size() == m) ? warm->y : Vec::Zero(m);
  Vec z = (inst.G * x).cwiseMin(inst.h);

  auto factor = [&](double rho_now) {
    Mat K = P2 + sigma * Mat::Identity(n, n) + rho_now * inst.G.transpose() * inst.G;
    return Eigen::LDLT<Mat>(K);
  };
  Eigen::LDLT<Mat> kkt = factor(rho);
  if (kkt.info() != Eigen::Success) throw NumericError("solve_qp: KKT factorization failed");

  Vec y_prev_check = y;
  double r_prim = kInf, r_dual = kInf;
  int iter = 0;
  for (iter = 1; iter <= settings.max_iter; ++iter) {
    const Vec rhs = sigma * x - q2 + inst.G.transpose() * (rho * z - y);
    x = kkt.solve(rhs);
    const Vec Gx = inst.G * x;
    const Vec z_hat = alpha * Gx + (1.0 - alpha) * z;
    const Vec z_new = (z_hat + y / rho).cwiseMin(inst.h);
    y += rho * (z_hat - z_new);
    z = z_new;

    r_prim = (Gx - z).lpNorm<Eigen::Infinity>();
    r_dual = (P2 * x + q2 + inst.G.transpose() * y).lpNorm<Eigen::Infinity>();

    if (settings.record_trace)
      sol.trace.push_back({inst.objective(x), r_prim, r_dual, z, y});

    // Tighten the primal tolerance by the dual magnitude so that
    // complementarity |y .* (Gv - h)| also lands below eps_abs.
    const double eps_prim = settings.eps_abs / std::max(1.0, y.lpNorm<Eigen::Infinity>());
    if (r_prim <= eps_prim && r_dual <= settings.eps_abs) {
      sol.status = SolveStatus::Optimal;
      break;
    }

    if (iter % settings.check_every == 0) {
      // Primal infeasibility certificate from the dual update direction.
      const Vec dy = y - y_prev_check;
      const double dy_norm = dy.lpNorm<Eigen::Infinity>();
      if (dy_norm > 1e-12) {
        const double support = inst.h.dot(dy.cwiseMax(0.0)) +
                               0.0;  // lower bounds are -inf, only upper side contributes
        if ((inst.G.transpose() * dy).lpNorm<Eigen::Infinity>() <= 1e-5 * dy_norm &&
            support < -1e-5 * dy_norm) {
          sol.status = SolveStatus::Infeasible;
          break;
        }
      }
      y_prev_check = y;

      if (settings.adaptive_rho && r_dual > 1e-300) {
        const double ratio = std::sqrt((r_prim + 1e-300) / (r_dual + 1e-300));
        if (ratio > 5.0 || ratio < 0.2) {
          rho = std::clamp(rho * ratio, 1e-6, 1e6);
          kkt = factor(rho);
          if (kkt.info() != Eigen::Success)
            throw NumericError("solve_qp: KKT refactorization failed");
        }
      }
    }
  }
  if (iter > settings.max_iter) {
    iter = settings.max_iter;
    sol.status = SolveStatus::MaxIter;
  }

  // Active-set polish: exact KKT solve on the rows the splitting identified
  // as active. Accepted only if primal and dual feasibility both hold, which
  // pins the solution to the optimum independent of objective scaling.
  if (sol.status == SolveStatus::Optimal) {
    const double y_scale = std::max(1.0, y.lpNorm<Eigen::Infinity>());
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < m; ++i)
      if (y[i] > 1e-10 * y_scale) active.push_back(i);
    const auto na = static_cast<Eigen::Index>(active.size());
    if (na <= n) {
      Mat GA(na, n);
      Vec hA(na);
      for (Eigen::Index i = 0; i < na; ++i) {
        GA.row(i) = inst.G.row(active[static_cast<std::size_t>(i)]);
        hA[i] = inst.h[active[static_cast<std::size_t>(i)]];
      }
      Mat K = Mat::Zero(n + na, n + na);
      K.topLeftCorner(n, n) = P2;
      if (na > 0) {
        K.topRightCorner(n, na) = GA.transpose();
        K.bottomLeftCorner(na, n) = GA;
      }
      Vec rhs(n + na);
      rhs.head(n) = -q2;
      rhs.tail(na) = hA;
      Eigen::FullPivLU<Mat> lu(K);
      if (lu.isInvertible()) {
        const Vec sol_kkt = lu.solve(rhs);
        const Vec xp = sol_kkt.head(n);
        const Vec lam = sol_kkt.tail(na);
        const double viol = inst.linear_violation(xp);
        const bool dual_ok = na == 0 || lam.minCoeff() >= -1e-9 * y_scale;
        if (viol <= settings.eps_abs && dual_ok) {
          x = xp;
          y.setZero();
          for (Eigen::Index i = 0; i < na; ++i)
            y[active[static_cast<std::size_t>(i)]] = std::max(lam[i], 0.0);
          r_prim = viol;
          r_dual = (P2 * x + q2 + inst.G.transpose() * y).lpNorm<Eigen::Infinity>();
        }
      }
    }
  }

  sol.v = x;
  sol.dual = y;
  sol.objective = inst.objective(x);
  sol.iterations = iter;
  sol.primal_residual = r_prim;
  sol.dual_residual = r_dual;
  sol.wall_time_s = seconds_since(t_start);
  return sol;
}

// ---------------------------------------------------------------------------
// Primal barrier QCQP
// ---------------------------------------------------------------------------

namespace {

struct BarrierProblem {
  const ProgramInstance& inst;

  Eigen::Index constraint_count() const {
    return inst.G.rows() + static_cast<Eigen::Index>(inst.quad.size());
  }

  // f_i values; all must be < 0 at strictly feasible points.
  Vec constraint_values(const Vec& v) const {
    Vec f(constraint_count());
    Eigen::Index at = 0;
    if (inst.G.rows() > 0) {
      f.head(inst.G.rows()) = inst.G * v - inst.h;
      at = inst.G.rows();
    }
    for (const auto& c : inst.quad) f[at++] = v.dot(c.P * v) + 2.0 * c.q.dot(v) + c.r;
    return f;
  }
};

struct NewtonResult {
  Vec v;
  bool converged = false;
  int iterations = 0;
};

// Minimizes t*f0(v) + barrier(v) from a strictly feasible start.
NewtonResult newton_centering(const BarrierProblem& bp, double t, Vec v,
                              const SolverSettings& st) {
  const ProgramInstance& inst = bp.inst;
  const Eigen::Index n = inst.dim();
  const Mat P2 = inst.P + inst.P.transpose();
  const Vec q2 = 2.0 * inst.q;

  NewtonResult res;
  for (int it = 0; it < st.newton_max; ++it) {
    const Vec f = bp.constraint_values(v);
    if ((f.array() >= 0.0).any())
      throw NumericError("solve_qcqp: barrier iterate left the strictly feasible region");

    Vec grad = t * (P2 * v + q2);
    Mat hess = t * P2;
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < inst.G.rows(); ++i, ++at) {
      const double inv = 1.0 / (-f[at]);
      grad += inv * inst.G.row(i).transpose();
      hess += inv * inv * inst.G.row(i).transpose() * inst.G.row(i);
    }
    for (const auto& c : inst.quad) {
      const double inv = 1.0 / (-f[at]);
      const Vec gi = 2.0 * (c.P * v + c.q);
      grad += inv * gi;
      hess += inv * inv * gi * gi.transpose() + inv * 2.0 * c.P;
      ++at;
    }

    Eigen::LDLT<Mat> ldlt(hess + 1e-12 * Mat::Identity(n, n));
    Vec step = ldlt.solve(-grad);
    double decrement = -grad.dot(step);
    if (!(decrement > -1e-12))
      throw NumericError("solve_qcqp: Newton direction is not a descent direction");
    if (decrement < 0.0) decrement = 0.0;
    res.iterations = it + 1;
    if (0.5 * decrement <= 1e-10) {
      res.converged = true;
      break;
    }

    // Backtrack into strict feasibility, then Armijo on the barrier objective.
    auto barrier_value = [&](const Vec& w) {
      const Vec fw = bp.constraint_values(w);
      if ((fw.array() >= 0.0).any()) return kInf;
      return t * inst.objective(w) - (-fw.array()).log().sum();
    };
    const double base = barrier_value(v);
    double s = 1.0;
    while (barrier_value(v + s * step) > base - st.ls_alpha * s * decrement) {
      s *= st.ls_beta;
      if (s < 1e-14)
        throw NumericError("solve_qcqp: line search failed to make progress");
    }
    v += s * step;
  }
  res.v = std::move(v);
  return res;
}

// Phase-1: minimize s subject to f_i(v) <= s; returns a strictly feasible v
// or signals infeasibility.
bool phase_one(const BarrierProblem& bp, Vec& v, const SolverSettings& st) {
  const ProgramInstance& inst = bp.inst;
  const Eigen::Index n = inst.dim();
  const Eigen::Index m = bp.constraint_count();

  double s = bp.constraint_values(v).maxCoeff() + 1.0;

  double t = 1.0;
  for (int outer = 0; outer < 80; ++outer) {
    // Newton on (v, s) for t*s - sum log(s - f_i(v)).
    for (int it = 0; it < st.newton_max; ++it) {
      const Vec f = bp.constraint_values(v);
      const Vec slack = (Vec::Constant(m, s) - f).eval();
      if ((slack.array() <= 0.0).any())
        throw NumericError("solve_qcqp: phase-1 iterate infeasible for its own barrier");

      Vec grad_v = Vec::Zero(n);
      double grad_s = t;
      Mat hess_vv = Mat::Zero(n, n);
      Vec hess_vs = Vec::Zero(n);
      double hess_ss = 0.0;

      Eigen::Index at = 0;
      auto add_term = [&](const Vec& gi, const Mat& Hi, double slack_i) {
        const double inv = 1.0 / slack_i;
        grad_v += inv * gi;
        grad_s -= inv;
        hess_vv += inv * inv * gi * gi.transpose() + inv * Hi;
        hess_vs -= inv * inv * gi;
        hess_ss += inv * inv;
      };
      for (Eigen::Index i = 0; i < inst.G.rows(); ++i, ++at)
        add_term(inst.G.row(i).transpose(), Mat::Zero(n, n), slack[at]);
      for (const auto& c : inst.quad) {
        add_term(2.0 * (c.P * v + c.q), 2.0 * c.P, slack[at]);
        ++at;
      }

      Mat H(n + 1, n + 1);
      H.topLeftCorner(n, n) = hess_vv;
      H.topRightCorner(n, 1) = hess_vs;
      H.bottomLeftCorner(1, n) = hess_vs.transpose();
      H(n, n) = hess_ss;
      Vec g(n + 1);
      g.head(n) = grad_v;
      g[n] = grad_s;

      Eigen::LDLT<Mat> ldlt(H + 1e-12 * Mat::Identity(n + 1, n + 1));
      const Vec step = ldlt.solve(-g);
      const double decrement = -g.dot(step);
      if (0.5 * std::max(decrement, 0.0) <= 1e-12) break;

      auto value = [&](const Vec& w, double sw) {
        const Vec fw = bp.constraint_values(w);
        const Vec sl = Vec::Constant(m, sw) - fw;
        if ((sl.array() <= 0.0).any()) return kInf;
        return t * sw - sl.array().log().sum();
      };
      const double base = value(v, s);
      double ss = 1.0;
      while (value(v + ss * step.head(n), s + ss * step[n]) >
             base - st.ls_alpha * ss * decrement) {
        ss *= st.ls_beta;
        if (ss < 1e-14) break;
      }
      if (ss < 1e-14) break;
      v += ss * step.head(n);
      s += ss * step[n];
      if (s < -1e-9) return true;  // strictly feasible point found
    }
    if (s < -1e-9) return true;
    if (static_cast<double>(m) / t <= 1e-9 && s >= 0.0) return false;
    t *= st.mu;
  }
  return s < 0.0;
}

}  // namespace

Solution solve_qcqp(const ProgramInstance& inst, const WarmStart* warm,
                    const SolverSettings& settings) {
  if (inst.quad.empty()) return solve_qp(inst, warm, settings);

  const auto t_start = Clock::now();
  const Eigen::Index n = inst.dim();
  const BarrierProblem bp{inst};
  const auto m = static_cast<double>(bp.constraint_count());

  Solution sol;

  // Starting point: warm start if strictly feasible, else the QP relaxation
  // (quadratics dropped), else phase-1.
  Vec v;
  bool feasible = false;
  if (warm && warm->v.size() == n && bp.constraint_values(warm->v).maxCoeff() < -1e-10) {
    v = warm->v;
    feasible = true;
  }
  if (!feasible) {
    ProgramInstance relaxed{inst.P, inst.q, inst.r, inst.G, inst.h, {}};
    const Solution qp_sol = solve_qp(relaxed, warm, settings);
    v = qp_sol.v;
    feasible = bp.constraint_values(v).maxCoeff() < -1e-10;
  }
  if (!feasible) {
    if (!phase_one(bp, v, settings)) {
      sol.v = v;
      sol.status = SolveStatus::Infeasible;
      sol.objective = inst.objective(v);
      sol.wall_time_s = seconds_since(t_start);
      return sol;
    }
  }

  double t = std::max(1.0, m / (1.0 + std::abs(inst.objective(v))));
  int total_newton = 0;
  for (int outer = 0; outer < 200; ++outer) {
    NewtonResult centered = newton_centering(bp, t, v, settings);
    v = centered.v;
    total_newton += centered.iterations;
    const double gap = m / t;
    if (gap <= settings.eps_abs * (1.0 + std::abs(inst.objective(v)))) break;
    t *= settings.mu;
  }

  sol.v = v;
  sol.objective = inst.objective(v);
  sol.iterations = total_newton;
  sol.primal_residual = std::max(inst.linear_violation(v), inst.quad_violation(v));
  // Dual residual with the barrier multipliers lambda_i = 1 / (t * (-f_i)).
  {
    const Vec f = bp.constraint_values(v);
    Vec grad = inst.P * v + inst.P.transpose() * v + 2.0 * inst.q;
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < inst.G.rows(); ++i, ++at)
      grad += (1.0 / (t * (-f[at]))) * inst.G.row(i).transpose();
    for (const auto& c : inst.quad) {
      grad += (1.0 / (t * (-f[at]))) * 2.0 * (c.P * v + c.q);
      ++at;
    }
    sol.dual_residual = grad.lpNorm<Eigen::Infinity>();
  }
  {
    const Vec f = bp.constraint_values(v);
    sol.dual.resize(inst.G.rows());
    for (Eigen::Index i = 0; i < inst.G.rows(); ++i) sol.dual[i] = 1.0 / (t * (-f[i]));
  }
  sol.status = SolveStatus::Optimal;
  sol.wall_time_s = seconds_since(t_start);
  return sol;
}

Solution solve(const ProgramInstance& inst, const WarmStart* warm,
               const SolverSettings& settings) {
  return inst.quad.empty() ? solve_qp(inst, warm, settings) : solve_qcqp(inst, warm, settings);
}

std::string dump_instance(const ProgramInstance& inst) {
  std::ostringstream out;
  auto write_mat = [&](const char* name, const Mat& M) {
    out << "# " << name << " " << M.rows() << " " << M.cols() << "\n";
    char buf[64];
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", M(i, j));
        out << buf << (j + 1 < M.cols() ? " " : "");
      }
      out << "\n";
    }
  };
  write_mat("P", inst.P);
  write_mat("q", inst.q);
  write_mat("r", Mat::Constant(1, 1, inst.r));
  write_mat("G", inst.G);
  write_mat("h", inst.h);
  for (std::size_t i = 0; i < inst.quad.size(); ++i) {
    const std::string tag = "quad" + std::to_string(i);
    write_mat((tag + ".P").c_str(), inst.quad[i].P);
    write_mat((tag + ".q").c_str(), inst.quad[i].q);
    write_mat((tag + ".r").c_str(), Mat::Constant(1, 1, inst.quad[i].r));
  }
  return out.str();
}

}  // namespace ppko

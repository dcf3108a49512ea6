#pragma once

#include <optional>
#include <vector>

#include "ppko/model.hpp"
#include "ppko/solver.hpp"

namespace ppko {

/// One second-moment constraint E[(a' x_t - b)^2] <= c^2 enforced at
/// prediction step t (1-based).
struct MomentConstraint {
  int t = 1;
  Vec a;
  double b = 0.0;
  double c = 1.0;
};

/**
 * @brief Finite-horizon SMPC problem data: LQR-type weights, optional
 * per-step mean bounds, optional second-moment constraints, input box.
 */
struct SmpcSpec {
  int horizon = 1;
  Mat Q;    // n_x x n_x, PSD
  Mat R;    // n_u x n_u, PD
  Mat Q_f;  // n_x x n_x, PSD

  // Mean-state bounds per step (n_x x H); +-inf entries disable a row.
  // Empty matrices disable all mean bounds.
  Mat x_min;
  Mat x_max;

  std::vector<MomentConstraint> moment_constraints;

  Vec u_min;  // elementwise, -inf allowed
  Vec u_max;

  void validate(int n_x, int n_u) const;
};

/**
 * @brief All theta-expectations of the condensed SMPC problem, evaluated by
 * quadrature offline. Instantiating for a measured z0 is a handful of
 * matrix-vector products; the decision dimension is always H * n_u.
 */
struct CondensedProblem {
  int horizon = 0;
  int n_x = 0;
  int n_u = 0;
  int n_psi = 0;

  Mat H;      // Hn_u x Hn_u: Rbar + E[F' Qbar F]
  Mat W_gE;   // Hn_u x n_psi: E[F' Qbar E]
  Mat W_EE;   // n_psi x n_psi: E[E' Qbar E]
  Mat E_bar;  // Hn_x x n_psi: per-step mean prediction E[E_t]
  Mat F_bar;  // Hn_x x Hn_u

  struct CondensedMoment {
    MomentConstraint source;
    Mat M;  // (n_psi + Hn_u)^2, PSD
    Vec c;  // n_psi + Hn_u
  };
  std::vector<CondensedMoment> moments;

  Mat x_min;  // as in SmpcSpec (may be empty)
  Mat x_max;
  Vec u_min;
  Vec u_max;

  std::uint64_t model_hash = 0;
  std::uint64_t spec_hash = 0;
  std::uint64_t quad_hash = 0;

  Eigen::Index decision_dim() const { return static_cast<Eigen::Index>(horizon) * n_u; }
};

/// Stacked prediction matrices for one parameter value:
///   X = E(theta) z0 + F(theta) U, block row t of E is C A^t, block (t,s) of F
/// is C A^{t-1-s} B for s < t (lower block triangular).
void build_EF(const PpkoModel& model, int horizon, const Vec& theta, Mat& E, Mat& F);

/// Offline quadrature evaluation of every condensed matrix. The rule may be
/// any weighted atom list whose nodes lie in the parameter support.
CondensedProblem condense(const PpkoModel& model, const SmpcSpec& spec,
                          const QuadratureRule& quad);

/// Deterministic convex program for a measured lifted state. Objective is
///   U' H U + 2 (W_gE z0)' U + z0' W_EE z0,
/// which equals the quadrature expectation of the stage cost exactly.
ProgramInstance instantiate(const CondensedProblem& cp, const Vec& z0);

}  // namespace ppko

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ppko/common.hpp"
#include "ppko/errors.hpp"

namespace ppko {

/**
 * @brief Dense convex program
 *
 *   minimize    v' P v + 2 q' v + r
 *   subject to  G v <= h                      (two-sided bounds as two rows)
 *               v' P_i v + 2 q_i' v + r_i <= 0
 *
 * P and every P_i must be symmetric PSD.
 */
struct ProgramInstance {
  Mat P;
  Vec q;
  double r = 0.0;
  Mat G;
  Vec h;

  struct QuadConstraint {
    Mat P;
    Vec q;
    double r = 0.0;
  };
  std::vector<QuadConstraint> quad;

  Eigen::Index dim() const { return P.rows(); }

  double objective(const Vec& v) const { return v.dot(P * v) + 2.0 * q.dot(v) + r; }

  /// Largest violation of the linear rows, 0 when feasible.
  double linear_violation(const Vec& v) const;
  /// Largest violation of the quadratic constraints, 0 when feasible.
  double quad_violation(const Vec& v) const;

  /// Dimension consistency plus PSD checks (eigenvalues >= -1e-9 * scale).
  void check() const;
};

enum class SolveStatus { Optimal, MaxIter, Infeasible };

const char* to_string(SolveStatus s);

struct SolverSettings {
  double eps_abs = 1e-6;  // absolute KKT residual tolerance
  int max_iter = 20000;

  // operator splitting
  double rho = 0.1;
  double sigma = 1e-6;
  double over_relaxation = 1.6;
  bool adaptive_rho = true;
  int check_every = 25;

  // barrier method
  double mu = 10.0;             // outer decrease factor
  double ls_alpha = 0.25;       // Armijo fraction
  double ls_beta = 0.5;         // backtracking factor
  int newton_max = 250;

  bool record_trace = false;
};

struct IterateRecord {
  double objective = 0.0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  Vec z;
  Vec y;
};

struct Solution {
  Vec v;
  Vec dual;  // linear-constraint multipliers (one per row of G)
  double objective = 0.0;
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double wall_time_s = 0.0;
  std::vector<IterateRecord> trace;  // filled when settings.record_trace
};

struct WarmStart {
  Vec v;
  Vec y;  // linear-constraint duals; may be empty
};

/// Operator-splitting solver for instances without quadratic constraints.
Solution solve_qp(const ProgramInstance& inst, const WarmStart* warm = nullptr,
                  const SolverSettings& settings = {});

/// Primal log-barrier solver; handles quadratic constraints (delegates to
/// solve_qp when there are none). Runs a phase-1 feasibility search when the
/// warm start is not strictly feasible.
Solution solve_qcqp(const ProgramInstance& inst, const WarmStart* warm = nullptr,
                    const SolverSettings& settings = {});

/// Dispatch on the presence of quadratic constraints.
Solution solve(const ProgramInstance& inst, const WarmStart* warm = nullptr,
               const SolverSettings& settings = {});

/// Reproducible text dump (one section per matrix, 17 significant digits)
/// for cross-checking against external tools.
std::string dump_instance(const ProgramInstance& inst);

/// Adapter seam: an external solver binding can be swapped in without
/// touching call sites.
class ConvexSolver {
 public:
  virtual ~ConvexSolver() = default;
  virtual Solution solve(const ProgramInstance& inst, const WarmStart* warm) = 0;
};

class InternalSolver final : public ConvexSolver {
 public:
  explicit InternalSolver(SolverSettings settings = {}) : settings_(settings) {}
  Solution solve(const ProgramInstance& inst, const WarmStart* warm) override {
    return ppko::solve(inst, warm, settings_);
  }
  SolverSettings& settings() { return settings_; }

 private:
  SolverSettings settings_;
};

}  // namespace ppko

#pragma once

#include <random>
#include <vector>

#include "ppko/common.hpp"
#include "ppko/errors.hpp"
#include "ppko/pce_basis.hpp"

namespace ppko {

/// Classical RK4 with the input held constant over the step.
/// Throws NumericError when an intermediate evaluation is non-finite.
template <typename Rhs>
Vec rk4_step(Rhs&& rhs, const Vec& x, const Vec& u, const Vec& theta, double h) {
  if (!(h > 0.0)) throw ContractError("rk4_step: requires h > 0");
  const Vec k1 = rhs(x, u, theta);
  const Vec k2 = rhs(x + 0.5 * h * k1, u, theta);
  const Vec k3 = rhs(x + 0.5 * h * k2, u, theta);
  const Vec k4 = rhs(x + h * k3, u, theta);
  Vec out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw NumericError("rk4_step: non-finite integration step");
  return out;
}

/**
 * @brief Controlled Duffing oscillator with uncertain (delta, beta, alpha):
 *   x1' = x2,  x2' = -delta x2 - x1 (beta + alpha x1^2) + u.
 */
struct DuffingPlant {
  double dt = 0.02;
  double delta_lo = 0.0, delta_hi = 1.0;
  double beta_lo = -2.0, beta_hi = 2.0;
  double alpha_lo = 0.0, alpha_hi = 2.0;

  static constexpr int n_x = 2;
  static constexpr int n_u = 1;
  static constexpr int n_theta = 3;

  static Vec rhs(const Vec& x, const Vec& u, const Vec& theta);

  /// One control-interval step (single RK4 step of length dt).
  Vec step(const Vec& x, const Vec& u, const Vec& theta) const {
    return rk4_step(rhs, x, u, theta, dt);
  }

  std::vector<PolyFamily> families() const;
  Vec theta_mean() const;
};

struct CstrConstants {
  double k3 = 0.4;
  double k4 = 0.3;
  double V = 1.0;
  double q2 = 0.2;
  double cA_in = 2.0;
  double cB_in = 1.5;
  double q1_ss = 0.3;
};

struct SteadyState {
  Vec c;  // concentrations (A, B, C, D)
  double q1 = 0.0;
  double residual_norm = 0.0;
};

/**
 * @brief Series-parallel reaction network in a CSTR; states are the four
 * concentrations (A, B, C, D), the manipulated input is the feed flow q1,
 * and (k1, k2) are uniformly distributed uncertain rate constants.
 */
struct CstrPlant {
  CstrConstants constants;
  double dt_control = 0.1;
  double dt_integration = 0.01;
  double k1_lo = 0.2789, k1_hi = 0.8927;
  double k2_lo = 0.1894, k2_hi = 0.9331;

  static constexpr int n_x = 4;
  static constexpr int n_u = 1;
  static constexpr int n_theta = 2;

  /// theta = (k1, k2); u = (q1). `cB_in_override` substitutes the disturbed
  /// feed concentration when non-negative.
  Vec rhs(const Vec& c, const Vec& u, const Vec& theta, double cB_in_override = -1.0) const;

  /// Advances one control interval with RK4 sub-steps of dt_integration,
  /// monitoring nonnegativity of the concentrations.
  Vec step(const Vec& c, const Vec& u, const Vec& theta, double cB_in_override = -1.0) const;

  std::vector<PolyFamily> families() const;
  Vec theta_mean() const;
};

/**
 * @brief Newton solve of rhs(c, q1_ss, theta) = 0 from the pure-dilution
 * initial guess. Residual <= 1e-10 at the returned point; throws on
 * non-convergence or a negative steady state.
 */
SteadyState cstr_steady_state(const CstrPlant& plant, const Vec& theta, double q1_ss);

/// i.i.d. parameter draws from the plant's distribution, seeded.
Mat sample_params(const DuffingPlant& plant, std::mt19937_64& rng, int count);
Mat sample_params(const CstrPlant& plant, std::mt19937_64& rng, int count);

}  // namespace ppko

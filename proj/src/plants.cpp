#include "ppko/plants.hpp"

#include <cmath>

namespace ppko {

Vec DuffingPlant::rhs(const Vec& x, const Vec& u, const Vec& theta) {
  const double delta = theta[0];
  const double beta = theta[1];
  const double alpha = theta[2];
  const double uu = u.size() > 0 ? u[0] : 0.0;
  Vec dx(2);
  dx[0] = x[1];
  dx[1] = -delta * x[1] - x[0] * (beta + alpha * x[0] * x[0]) + uu;
  return dx;
}

std::vector<PolyFamily> DuffingPlant::families() const {
  return {PolyFamily::uniform(delta_lo, delta_hi), PolyFamily::uniform(beta_lo, beta_hi),
          PolyFamily::uniform(alpha_lo, alpha_hi)};
}

Vec DuffingPlant::theta_mean() const {
  Vec m(3);
  m << 0.5 * (delta_lo + delta_hi), 0.5 * (beta_lo + beta_hi), 0.5 * (alpha_lo + alpha_hi);
  return m;
}

Vec CstrPlant::rhs(const Vec& c, const Vec& u, const Vec& theta, double cB_in_override) const {
  const double k1 = theta[0];
  const double k2 = theta[1];
  const auto& k = constants;
  const double q1 = u[0];
  const double cB_in = cB_in_override >= 0.0 ? cB_in_override : k.cB_in;
  const double flow = (q1 + k.q2) / k.V;
  const double ab = c[0] * c[1];
  Vec dc(4);
  dc[0] = (q1 / k.V) * k.cA_in - c[0] * flow - ab * (k1 + k2);
  dc[1] = (k.q2 / k.V) * cB_in - c[1] * flow - ab * (k1 + k2) - c[1] * c[2] * k.k3 -
          c[1] * c[3] * k.k4;
  dc[2] = -c[2] * flow + ab * k1 - c[1] * c[2] * k.k3;
  dc[3] = -c[3] * flow + ab * k2 - c[1] * c[3] * k.k4;
  return dc;
}

Vec CstrPlant::step(const Vec& c, const Vec& u, const Vec& theta, double cB_in_override) const {
  const int substeps = std::max(1, static_cast<int>(std::lround(dt_control / dt_integration)));
  Vec state = c;
  auto f = [&](const Vec& cc, const Vec& uu, const Vec& th) {
    return rhs(cc, uu, th, cB_in_override);
  };
  for (int s = 0; s < substeps; ++s) {
    state = rk4_step(f, state, u, theta, dt_integration);
    if ((state.array() < -1e-9).any())
      throw NumericError("CstrPlant::step: negative concentration during integration");
  }
  return state;
}

std::vector<PolyFamily> CstrPlant::families() const {
  return {PolyFamily::uniform(k1_lo, k1_hi), PolyFamily::uniform(k2_lo, k2_hi)};
}

Vec CstrPlant::theta_mean() const {
  Vec m(2);
  m << 0.5 * (k1_lo + k1_hi), 0.5 * (k2_lo + k2_hi);
  return m;
}

SteadyState cstr_steady_state(const CstrPlant& plant, const Vec& theta, double q1_ss) {
  if (!(q1_ss > 0.0)) throw ContractError("cstr_steady_state: requires q1_ss > 0");
  const double k1 = theta[0];
  const double k2 = theta[1];
  const auto& k = plant.constants;
  const double flow = (q1_ss + k.q2) / k.V;

  // Pure-dilution solution (all rates zero) as the initial guess.
  Vec c(4);
  c << q1_ss * k.cA_in / (q1_ss + k.q2), k.q2 * k.cB_in / (q1_ss + k.q2), 0.0, 0.0;

  Vec u(1);
  u << q1_ss;
  Vec res = plant.rhs(c, u, theta);
  for (int it = 0; it < 100; ++it) {
    if (res.norm() <= 1e-12) break;
    Mat J(4, 4);
    J(0, 0) = -flow - c[1] * (k1 + k2);
    J(0, 1) = -c[0] * (k1 + k2);
    J(0, 2) = 0.0;
    J(0, 3) = 0.0;
    J(1, 0) = -c[1] * (k1 + k2);
    J(1, 1) = -flow - c[0] * (k1 + k2) - c[2] * k.k3 - c[3] * k.k4;
    J(1, 2) = -c[1] * k.k3;
    J(1, 3) = -c[1] * k.k4;
    J(2, 0) = c[1] * k1;
    J(2, 1) = c[0] * k1 - c[2] * k.k3;
    J(2, 2) = -flow - c[1] * k.k3;
    J(2, 3) = 0.0;
    J(3, 0) = c[1] * k2;
    J(3, 1) = c[0] * k2 - c[3] * k.k4;
    J(3, 2) = 0.0;
    J(3, 3) = -flow - c[1] * k.k4;
    c -= J.partialPivLu().solve(res);
    res = plant.rhs(c, u, theta);
  }
  if (!(res.norm() <= 1e-10))
    throw NumericError("cstr_steady_state: Newton did not converge, residual " +
                       std::to_string(res.norm()));
  if ((c.array() < 0.0).any())
    throw NumericError("cstr_steady_state: negative steady-state concentration");
  return SteadyState{c, q1_ss, res.norm()};
}

Mat sample_params(const DuffingPlant& plant, std::mt19937_64& rng, int count) {
  if (count < 1) throw ContractError("sample_params: count must be >= 1");
  std::uniform_real_distribution<double> d_delta(plant.delta_lo, plant.delta_hi);
  std::uniform_real_distribution<double> d_beta(plant.beta_lo, plant.beta_hi);
  std::uniform_real_distribution<double> d_alpha(plant.alpha_lo, plant.alpha_hi);
  Mat out(3, count);
  for (int j = 0; j < count; ++j) {
    out(0, j) = d_delta(rng);
    out(1, j) = d_beta(rng);
    out(2, j) = d_alpha(rng);
  }
  return out;
}

Mat sample_params(const CstrPlant& plant, std::mt19937_64& rng, int count) {
  if (count < 1) throw ContractError("sample_params: count must be >= 1");
  std::uniform_real_distribution<double> d_k1(plant.k1_lo, plant.k1_hi);
  std::uniform_real_distribution<double> d_k2(plant.k2_lo, plant.k2_hi);
  Mat out(2, count);
  for (int j = 0; j < count; ++j) {
    out(0, j) = d_k1(rng);
    out(1, j) = d_k2(rng);
  }
  return out;
}

}  // namespace ppko

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ppko/solver.hpp"

using namespace ppko;

namespace {

ProgramInstance box_instance(const Mat& P, const Vec& q, const Vec& lo, const Vec& hi) {
  ProgramInstance inst;
  inst.P = P;
  inst.q = q;
  const Eigen::Index n = q.size();
  inst.G.resize(2 * n, n);
  inst.h.resize(2 * n);
  inst.G.topRows(n) = Mat::Identity(n, n);
  inst.G.bottomRows(n) = -Mat::Identity(n, n);
  inst.h.head(n) = hi;
  inst.h.tail(n) = -lo;
  return inst;
}

Mat random_spd(std::mt19937_64& rng, Eigen::Index n, double ridge = 0.1) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat S(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) S(i, j) = g(rng);
  return S * S.transpose() / static_cast<double>(n) + ridge * Mat::Identity(n, n);
}

}  // namespace

TEST_CASE("pinned scalar QPs") {
  SUBCASE("clipped unconstrained optimum") {
    // min (v-1)^2 s.t. v <= 0.5
    ProgramInstance inst;
    inst.P = Mat::Constant(1, 1, 1.0);
    inst.q = Vec::Constant(1, -1.0);
    inst.r = 1.0;
    inst.G = Mat::Constant(1, 1, 1.0);
    inst.h = Vec::Constant(1, 0.5);
    const Solution sol = solve_qp(inst);
    CHECK(sol.status == SolveStatus::Optimal);
    CHECK(sol.v[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(sol.objective == doctest::Approx(0.25).epsilon(1e-6));
  }

  SUBCASE("interior optimum of a 3D box") {
    ProgramInstance inst = box_instance(Mat::Identity(3, 3), Vec::Zero(3),
                                        Vec::Constant(3, -1.0), Vec::Constant(3, 1.0));
    const Solution sol = solve_qp(inst);
    CHECK(sol.status == SolveStatus::Optimal);
    CHECK(sol.v.cwiseAbs().maxCoeff() <= 1e-6);
  }

  SUBCASE("unconstrained instance") {
    ProgramInstance inst;
    inst.P = Mat::Identity(2, 2);
    inst.q = Vec::Constant(2, -1.0);
    inst.G = Mat(0, 2);
    inst.h = Vec(0);
    const Solution sol = solve_qp(inst);
    CHECK(sol.status == SolveStatus::Optimal);
    CHECK((sol.v - Vec::Constant(2, 1.0)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("random box QPs match the projected-gradient oracle") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 29);
    const Mat P = random_spd(rng, n);
    Vec q(n), lo(n), hi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      q[i] = g(rng);
      const double a = g(rng), b = g(rng);
      lo[i] = std::min(a, b);
      hi[i] = std::max(a, b);
    }
    ProgramInstance inst = box_instance(P, q, lo, hi);
    const Solution sol = solve_qp(inst);
    REQUIRE(sol.status == SolveStatus::Optimal);
    const Vec ref = oracles::box_qp_projected_gradient(P, q, lo, hi);
    const double ref_obj = ref.dot(P * ref) + 2.0 * q.dot(ref);
    CHECK(sol.objective <= ref_obj + 1e-5);
    CHECK(sol.objective >= ref_obj - 1e-5);
    CHECK(inst.linear_violation(sol.v) <= 1e-6);
  }
}

TEST_CASE("general linear inequalities match active-set enumeration") {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 5);  // n <= 6
    const Eigen::Index m = 3 + static_cast<Eigen::Index>(rng() % 6);
    const Mat P = random_spd(rng, n, 0.3);
    Vec q(n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = g(rng);
    Mat G(m, n);
    Vec h(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) G(i, j) = g(rng);
      h[i] = 1.0 + std::abs(g(rng));  // origin stays feasible
    }
    ProgramInstance inst{P, q, 0.0, G, h, {}};
    const Solution sol = solve_qp(inst);
    REQUIRE(sol.status == SolveStatus::Optimal);
    const Vec ref = oracles::active_set_qp(P, q, G, h);
    const double ref_obj = ref.dot(P * ref) + 2.0 * q.dot(ref);
    CHECK(std::abs(sol.objective - ref_obj) <= 1e-5 * (1.0 + std::abs(ref_obj)));
  }
}

TEST_CASE("KKT residuals are reported below tolerance at Optimal") {
  std::mt19937_64 rng(71);
  const Mat P = random_spd(rng, 8);
  ProgramInstance inst = box_instance(P, Vec::Ones(8), Vec::Constant(8, -0.3),
                                      Vec::Constant(8, 0.2));
  const Solution sol = solve_qp(inst);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.dual_residual <= 1e-6);
  CHECK(inst.linear_violation(sol.v) <= 1e-6);
  // complementarity by direct substitution
  const Vec slack = inst.G * sol.v - inst.h;
  CHECK((sol.dual.cwiseProduct(slack)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("primal infeasibility is detected") {
  // v <= -1 and v >= 1 simultaneously
  ProgramInstance inst;
  inst.P = Mat::Identity(1, 1);
  inst.q = Vec::Zero(1);
  inst.G.resize(2, 1);
  inst.G << 1.0, -1.0;
  inst.h.resize(2);
  inst.h << -1.0, -1.0;
  const Solution sol = solve_qp(inst);
  CHECK(sol.status == SolveStatus::Infeasible);
}

TEST_CASE("scaling the objective leaves the minimizer unchanged") {
  std::mt19937_64 rng(73);
  const Mat P = random_spd(rng, 6);
  Vec q(6);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 6; ++i) q[i] = g(rng);
  ProgramInstance a = box_instance(P, q, Vec::Constant(6, -0.7), Vec::Constant(6, 0.4));
  ProgramInstance b = a;
  b.P *= 37.0;
  b.q *= 37.0;
  const Solution sa = solve_qp(a);
  const Solution sb = solve_qp(b);
  CHECK((sa.v - sb.v).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + sa.v.cwiseAbs().maxCoeff()));
}

TEST_CASE("operator splitting settles: distance to the solution set is monotone") {
  // With fixed rho, the (z, y) iterates are Fejer monotone with respect to
  // the fixed point; verify against the converged point on a few instances.
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat P = random_spd(rng, 10);
    Vec q(10);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 10; ++i) q[i] = g(rng);
    ProgramInstance inst = box_instance(P, q, Vec::Constant(10, -0.5), Vec::Constant(10, 0.5));

    SolverSettings st;
    st.adaptive_rho = false;
    st.record_trace = true;
    st.eps_abs = 1e-10;
    const Solution sol = solve_qp(inst, nullptr, st);
    REQUIRE(sol.status == SolveStatus::Optimal);
    REQUIRE(sol.trace.size() >= 12);
    const Vec z_star = sol.trace.back().z;
    const Vec y_star = sol.trace.back().y;
    const double rho = st.rho;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 10; k < sol.trace.size(); ++k) {
      const double v = rho * (sol.trace[k].z - z_star).squaredNorm() +
                       (sol.trace[k].y - y_star).squaredNorm() / rho;
      CHECK(v <= prev * (1.0 + 1e-9) + 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("warm starts cut iteration counts on perturbed instances") {
  std::mt19937_64 rng(83);
  const Mat P = random_spd(rng, 12);
  Vec q(12);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 12; ++i) q[i] = g(rng);
  ProgramInstance inst = box_instance(P, q, Vec::Constant(12, -1.0), Vec::Constant(12, 1.0));
  const Solution cold = solve_qp(inst);
  ProgramInstance nudged = inst;
  nudged.q.array() += 0.01;
  WarmStart ws{cold.v, cold.dual};
  const Solution warm = solve_qp(nudged, &ws);
  const Solution cold2 = solve_qp(nudged);
  CHECK(warm.iterations <= cold2.iterations);
}

TEST_CASE("pinned QCQPs") {
  SUBCASE("boundary optimum of a ball constraint") {
    // min (v-2)^2 s.t. v^2 <= 1
    ProgramInstance inst;
    inst.P = Mat::Constant(1, 1, 1.0);
    inst.q = Vec::Constant(1, -2.0);
    inst.r = 4.0;
    inst.G = Mat(0, 1);
    inst.h = Vec(0);
    inst.quad.push_back({Mat::Constant(1, 1, 1.0), Vec::Zero(1), -1.0});
    const Solution sol = solve_qcqp(inst);
    CHECK(sol.status == SolveStatus::Optimal);
    CHECK(sol.v[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-5));
  }

  SUBCASE("inactive quadratic constraint matches the plain QP") {
    std::mt19937_64 rng(89);
    const Mat P = random_spd(rng, 4);
    Vec q(4);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 4; ++i) q[i] = g(rng);
    ProgramInstance qp = box_instance(P, q, Vec::Constant(4, -2.0), Vec::Constant(4, 2.0));
    ProgramInstance qcqp = qp;
    qcqp.quad.push_back({Mat::Identity(4, 4), Vec::Zero(4), -10000.0});  // radius 100
    const Solution a = solve_qp(qp);
    const Solution b = solve_qcqp(qcqp);
    CHECK((a.v - b.v).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + a.v.cwiseAbs().maxCoeff()));
    CHECK(std::abs(a.objective - b.objective) <= 1e-6 * (1.0 + std::abs(a.objective)));
  }

  SUBCASE("infeasible quadratic pair is flagged") {
    ProgramInstance inst;
    inst.P = Mat::Identity(1, 1);
    inst.q = Vec::Zero(1);
    inst.G = Mat(0, 1);
    inst.h = Vec(0);
    inst.quad.push_back({Mat::Constant(1, 1, 1.0), Vec::Zero(1), -1.0});   // v^2 <= 1
    inst.quad.push_back({Mat::Constant(1, 1, 1.0), Vec::Constant(1, -4.0), 15.0});  // (v-4)^2 <= 1
    const Solution sol = solve_qcqp(inst);
    CHECK(sol.status == SolveStatus::Infeasible);
  }
}

TEST_CASE("random 2D QCQPs match the refining grid oracle") {
  std::mt19937_64 rng(97);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat P = random_spd(rng, 2, 0.2);
    Vec q(2);
    q << g(rng), g(rng);
    // one random ellipse through the Cholesky factor of an SPD matrix
    const Mat Pq = random_spd(rng, 2, 0.3);
    Vec qq(2);
    qq << 0.3 * g(rng), 0.3 * g(rng);
    // choose r so that a known point is strictly inside
    Vec inside(2);
    inside << 0.2 * g(rng), 0.2 * g(rng);
    const double rq = -(inside.dot(Pq * inside) + 2.0 * qq.dot(inside)) - 0.5 - std::abs(g(rng));

    ProgramInstance inst;
    inst.P = P;
    inst.q = q;
    inst.G = Mat(0, 2);
    inst.h = Vec(0);
    inst.quad.push_back({Pq, qq, rq});

    const Solution sol = solve_qcqp(inst);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(inst.quad_violation(sol.v) <= 1e-6);

    const double ref = oracles::grid_qcqp_objective(inst, Vec::Constant(2, -20.0),
                                                    Vec::Constant(2, 20.0));
    CHECK(std::abs(sol.objective - ref) <= 1e-4 * (1.0 + std::abs(ref)));
  }
}

TEST_CASE("instance dump is reproducible text") {
  ProgramInstance inst;
  inst.P = Mat::Identity(2, 2);
  inst.q = Vec::Zero(2);
  inst.G = Mat::Ones(1, 2);
  inst.h = Vec::Ones(1);
  inst.quad.push_back({Mat::Identity(2, 2), Vec::Zero(2), -1.0});
  const std::string a = dump_instance(inst);
  const std::string b = dump_instance(inst);
  CHECK(a == b);
  CHECK(a.find("# P 2 2") != std::string::npos);
  CHECK(a.find("# quad0.P 2 2") != std::string::npos);
}

TEST_CASE("PSD validation rejects indefinite objectives") {
  ProgramInstance inst;
  inst.P = -Mat::Identity(2, 2);
  inst.q = Vec::Zero(2);
  inst.G = Mat(0, 2);
  inst.h = Vec(0);
  CHECK_THROWS_AS(inst.check(), ContractError);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ppko/condense.hpp"

using namespace ppko;

namespace {

SmpcSpec simple_spec(int H, int n_x, int n_u) {
  SmpcSpec spec;
  spec.horizon = H;
  spec.Q = Mat::Identity(n_x, n_x);
  spec.Q_f = 2.0 * Mat::Identity(n_x, n_x);
  spec.R = 0.1 * Mat::Identity(n_u, n_u);
  spec.u_min = Vec::Constant(n_u, -std::numeric_limits<double>::infinity());
  spec.u_max = Vec::Constant(n_u, std::numeric_limits<double>::infinity());
  return spec;
}

// three arbitrary atoms in [-1,1] with weights summing to one
QuadratureRule three_atoms() {
  QuadratureRule quad;
  quad.nodes.resize(1, 3);
  quad.nodes << -0.73, 0.11, 0.64;
  quad.weights.resize(3);
  quad.weights << 0.2, 0.45, 0.35;
  return quad;
}

// brute-force expectation of the stage cost over the atoms
double enumerated_cost(const PpkoModel& model, const SmpcSpec& spec, const QuadratureRule& quad,
                       const Vec& z0, const Vec& U) {
  const int H = spec.horizon;
  const int n_u = model.n_u();
  double cost = 0.0;
  for (Eigen::Index a = 0; a < quad.count(); ++a) {
    const Vec theta = quad.node(a);
    Vec z = z0;
    double stage = 0.0;
    for (int t = 0; t < H; ++t) {
      const Vec u = U.segment(t * n_u, n_u);
      stage += u.dot(spec.R * u);
      z = model.A_at(theta) * z + model.B_at(theta) * u;
      const Vec x = model.C * z;
      const Mat& W = (t == H - 1) ? spec.Q_f : spec.Q;
      stage += x.dot(W * x);
    }
    cost += quad.weights[a] * stage;
  }
  return cost;
}

// brute-force E[(a' x_t - b)^2] over the atoms
double enumerated_moment(const PpkoModel& model, const QuadratureRule& quad, const Vec& z0,
                         const Vec& U, const MomentConstraint& mc, int n_u) {
  double out = 0.0;
  for (Eigen::Index a = 0; a < quad.count(); ++a) {
    const Vec theta = quad.node(a);
    Vec z = z0;
    for (int t = 1; t <= mc.t; ++t)
      z = model.A_at(theta) * z + model.B_at(theta) * U.segment((t - 1) * n_u, n_u);
    const double g = mc.a.dot(model.C * z) - mc.b;
    out += quad.weights[a] * g * g;
  }
  return out;
}

}  // namespace

TEST_CASE("build_EF block structure") {
  std::mt19937_64 rng(101);
  const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 2);
  const PpkoModel model = oracles::make_inclass_model(rng, 2, 1, basis, 0.8);
  Vec theta(1);
  theta << 0.37;

  SUBCASE("H = 1 gives CA and CB") {
    Mat E, F;
    build_EF(model, 1, theta, E, F);
    CHECK((E - model.C * model.A_at(theta)).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((F - model.C * model.B_at(theta)).cwiseAbs().maxCoeff() <= 1e-14);
  }

  SUBCASE("A = 0 collapses E and makes F block diagonal") {
    PpkoModel zeroA = model;
    for (auto& Ak : zeroA.A_coeffs) Ak.setZero();
    Mat E, F;
    build_EF(zeroA, 3, theta, E, F);
    CHECK(E.cwiseAbs().maxCoeff() == 0.0);
    const Mat CB = zeroA.C * zeroA.B_at(theta);
    for (int t = 0; t < 3; ++t)
      for (int s = 0; s < 3; ++s) {
        const Mat block = F.block(t * 2, s, 2, 1);
        if (s == t)
          CHECK((block - CB).cwiseAbs().maxCoeff() <= 1e-14);
        else
          CHECK(block.cwiseAbs().maxCoeff() == 0.0);
      }
  }

  SUBCASE("stacked prediction agrees with rollout") {
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      Vec x0(2);
      x0 << g(rng), g(rng);
      Mat U(1, 4);
      for (int t = 0; t < 4; ++t) U(0, t) = g(rng);
      Vec th(1);
      th << -1.0 + 2.0 * (trial + 0.5) / 10.0;

      Mat E, F;
      build_EF(model, 4, th, E, F);
      const Vec z0 = model.dict.lift(x0);
      const Vec stacked = E * z0 + F * Eigen::Map<const Vec>(U.data(), 4);
      const Mat X = model.rollout(x0, U, th);
      for (int t = 0; t < 4; ++t)
        CHECK((stacked.segment(t * 2, 2) - X.col(t)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("condensation: deterministic model equals its single-theta value") {
  std::mt19937_64 rng(103);
  const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 0);  // N_K = 1
  const PpkoModel model = oracles::make_inclass_model(rng, 2, 1, basis, 0.8);
  SmpcSpec spec = simple_spec(3, 2, 1);
  const QuadratureRule quad = model.basis.gauss_rule(3);
  const CondensedProblem cp = condense(model, spec, quad);

  Mat E, F;
  Vec theta(1);
  theta << 0.0;
  build_EF(model, 3, theta, E, F);
  Mat Qbar = Mat::Zero(6, 6);
  Qbar.block(0, 0, 2, 2) = spec.Q;
  Qbar.block(2, 2, 2, 2) = spec.Q;
  Qbar.block(4, 4, 2, 2) = spec.Q_f;
  Mat Rbar = 0.1 * Mat::Identity(3, 3);
  CHECK((cp.H - (Rbar + F.transpose() * Qbar * F)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((cp.E_bar - E).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((cp.F_bar - F).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("scalar toy: H = r + E[theta^2] exactly") {
  // n_psi = n_x = n_u = 1 via a hand-built model: C = 1, A = 0, B(theta) = theta
  const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 1);
  PpkoModel model{basis, Dictionary(1, 0, {}, 0), {}, {}, Mat()};
  // dictionary has n_psi = 2 ([1; x]); emulate the scalar case in the x block
  model.A_coeffs = {Mat::Zero(2, 2), Mat::Zero(2, 2)};
  Mat B0 = Mat::Zero(2, 1), B1 = Mat::Zero(2, 1);
  B1(1, 0) = 1.0 / std::sqrt(3.0);  // phi_1 = sqrt(3) theta, so B(theta) = theta
  model.B_coeffs = {B0, B1};
  model.C = PpkoModel::output_matrix(1, 2);

  SmpcSpec spec = simple_spec(1, 1, 1);
  spec.Q = Mat::Zero(1, 1);
  spec.Q_f = Mat::Identity(1, 1);
  const double r = 0.05;
  spec.R = r * Mat::Identity(1, 1);

  const CondensedProblem cp = condense(model, spec, basis.gauss_rule(2));
  CHECK(cp.H(0, 0) == doctest::Approx(r + 1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("three-atom toy matches brute-force enumeration") {
  std::mt19937_64 rng(107);
  const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 2);
  const PpkoModel model = oracles::make_inclass_model(rng, 2, 1, basis, 0.85);
  REQUIRE(model.n_psi() == 3);

  SmpcSpec spec = simple_spec(3, 2, 1);
  spec.Q(0, 1) = spec.Q(1, 0) = 0.2;
  Vec a1(2), a2(2);
  a1 << 1.0, 0.0;
  a2 << 0.5, -1.0;
  spec.moment_constraints.push_back({1, a1, 0.3, 1.5});
  spec.moment_constraints.push_back({3, a2, -0.2, 2.5});

  const QuadratureRule quad = three_atoms();
  const CondensedProblem cp = condense(model, spec, quad);

  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vec x0(2);
    x0 << g(rng), g(rng);
    const Vec z0 = model.dict.lift(x0);
    Vec U(3);
    U << g(rng), g(rng), g(rng);

    const ProgramInstance inst = instantiate(cp, z0);
    const double cost = inst.objective(U);
    const double ref = enumerated_cost(model, spec, quad, z0, U);
    CHECK(std::abs(cost - ref) <= 1e-9 * (1.0 + std::abs(ref)));

    REQUIRE(inst.quad.size() == 2);
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& qc = inst.quad[c];
      const double lhs = U.dot(qc.P * U) + 2.0 * qc.q.dot(U) + qc.r;
      const auto& mc = spec.moment_constraints[c];
      const double ref_m =
          enumerated_moment(model, quad, z0, U, mc, 1) - mc.c * mc.c;
      CHECK(std::abs(lhs - ref_m) <= 1e-9 * (1.0 + std::abs(ref_m)));
    }
  }
}

TEST_CASE("condensed problem invariants") {
  std::mt19937_64 rng(109);
  const PceBasis basis({PolyFamily::uniform(0.0, 1.0), PolyFamily::uniform(-2.0, 2.0)}, 2);
  const PpkoModel model = oracles::make_inclass_model(rng, 2, 1, basis, 0.8);
  SmpcSpec spec = simple_spec(4, 2, 1);
  Vec a(2);
  a << 1.0, 1.0;
  spec.moment_constraints.push_back({2, a, 0.0, 1.0});
  const CondensedProblem cp = condense(model, spec, model.basis.gauss_rule(4));

  SUBCASE("H dominates R and moments are PSD") {
    Eigen::SelfAdjointEigenSolver<Mat> es(cp.H, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= 0.1 - 1e-10);
    for (const auto& cm : cp.moments) {
      Eigen::SelfAdjointEigenSolver<Mat> em(cm.M, Eigen::EigenvaluesOnly);
      CHECK(em.eigenvalues().minCoeff() >= -1e-10);
    }
  }

  SUBCASE("decision dimension is H * n_u for any n_psi") {
    // base with learned features so it can be padded out
    PpkoModel base{model.basis, Dictionary(2, 2, {4}, 9), {}, {}, Mat()};
    const int np = base.dict.n_psi();
    for (std::size_t k = 0; k < model.basis.size(); ++k) {
      base.A_coeffs.push_back(0.1 * Mat::Identity(np, np));
      base.B_coeffs.push_back(Mat::Ones(np, 1) * 0.05);
    }
    base.C = PpkoModel::output_matrix(2, np);
    for (int target : {5, 50, 200}) {
      const PpkoModel padded = pad_observables(base, target);
      const CondensedProblem cpp = condense(padded, spec, padded.basis.gauss_rule(3));
      const Vec z0 = padded.dict.lift(Vec::Zero(2));
      const ProgramInstance inst = instantiate(cpp, z0);
      CHECK(inst.dim() == 4);
    }
  }

  SUBCASE("quadrature consistency once past the exactness threshold") {
    // entries of F'QF have per-dim degree <= 2 * D * H = 16; 9 nodes suffice
    const CondensedProblem lo = condense(model, spec, model.basis.gauss_rule(9));
    const CondensedProblem hi = condense(model, spec, model.basis.gauss_rule(18));
    CHECK((lo.H - hi.H).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((lo.E_bar - hi.E_bar).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((lo.F_bar - hi.F_bar).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((lo.W_gE - hi.W_gE).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((lo.W_EE - hi.W_EE).cwiseAbs().maxCoeff() <= 1e-8);
    for (std::size_t i = 0; i < lo.moments.size(); ++i)
      CHECK((lo.moments[i].M - hi.moments[i].M).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("instantiate edge cases") {
  std::mt19937_64 rng(113);
  const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 1);
  const PpkoModel model = oracles::make_inclass_model(rng, 2, 1, basis, 0.8);

  SUBCASE("z0 = 0 and b = 0 reduce the moment constraint to U' M_UU U <= c^2") {
    SmpcSpec spec = simple_spec(2, 2, 1);
    Vec a(2);
    a << 1.0, 0.5;
    spec.moment_constraints.push_back({2, a, 0.0, 1.3});
    const CondensedProblem cp = condense(model, spec, basis.gauss_rule(3));
    const ProgramInstance inst = instantiate(cp, Vec::Zero(model.n_psi()));
    REQUIRE(inst.quad.size() == 1);
    CHECK(inst.quad[0].q.cwiseAbs().maxCoeff() == 0.0);
    CHECK(inst.quad[0].r == doctest::Approx(-1.3 * 1.3));
  }

  SUBCASE("no constraints gives a pure box QP of dimension H*n_u") {
    SmpcSpec spec = simple_spec(5, 2, 1);
    spec.u_min = Vec::Constant(1, -2.0);
    spec.u_max = Vec::Constant(1, 2.0);
    const CondensedProblem cp = condense(model, spec, basis.gauss_rule(3));
    const ProgramInstance inst = instantiate(cp, model.dict.lift(Vec::Zero(2)));
    CHECK(inst.dim() == 5);
    CHECK(inst.quad.empty());
    CHECK(inst.G.rows() == 10);  // one upper and one lower row per input
  }

  SUBCASE("mean-state bounds become linear rows") {
    SmpcSpec spec = simple_spec(2, 2, 1);
    spec.x_min = Mat::Constant(2, 2, -5.0);
    spec.x_max = Mat::Constant(2, 2, 5.0);
    const CondensedProblem cp = condense(model, spec, basis.gauss_rule(3));
    const Vec z0 = model.dict.lift(Vec::Zero(2));
    const ProgramInstance inst = instantiate(cp, z0);
    CHECK(inst.G.rows() == 8);  // 2 states x 2 steps x both sides
    // rows encode x_min - E z0 <= F U <= x_max - E z0
    const Vec mean0 = cp.E_bar.topRows(2) * z0;
    CHECK(inst.h[0] == doctest::Approx(5.0 - mean0[0]));
    CHECK(inst.h[1] == doctest::Approx(mean0[0] + 5.0));
  }
}

TEST_CASE("spec validation rejects malformed problems") {
  SmpcSpec spec = simple_spec(3, 2, 1);
  SUBCASE("non-PSD Q") {
    spec.Q(0, 0) = -1.0;
    CHECK_THROWS_AS(spec.validate(2, 1), ContractError);
  }
  SUBCASE("singular R") {
    spec.R.setZero();
    CHECK_THROWS_AS(spec.validate(2, 1), ContractError);
  }
  SUBCASE("moment constraint out of horizon") {
    Vec a(2);
    a << 1.0, 0.0;
    spec.moment_constraints.push_back({7, a, 0.0, 1.0});
    CHECK_THROWS_AS(spec.validate(2, 1), ContractError);
  }
  SUBCASE("nonpositive moment bound") {
    Vec a(2);
    a << 1.0, 0.0;
    spec.moment_constraints.push_back({1, a, 0.0, 0.0});
    CHECK_THROWS_AS(spec.validate(2, 1), ContractError);
  }
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ppko/pce_basis.hpp"

using namespace ppko;

namespace {

PceBasis uniform_basis(int d, int D) {
  std::vector<PolyFamily> fams;
  for (int i = 0; i < d; ++i) fams.push_back(PolyFamily::uniform(-1.0, 1.0));
  return PceBasis(std::move(fams), D);
}

}  // namespace

TEST_CASE("univariate orthonormal values at pinned points") {
  const PolyFamily leg = PolyFamily::uniform(-1.0, 1.0);
  CHECK(univariate_eval(leg, 0, 0.7) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(univariate_eval(leg, 1, 1.0) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));

  const PolyFamily herm = PolyFamily::gaussian(0.0, 1.0);
  CHECK(univariate_eval(herm, 2, 0.0) ==
        doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("multi-index sets: sizes and canonical order") {
  const auto s1 = MultiIndexSet::total_degree(1, 2);
  REQUIRE(s1.size() == 3);
  CHECK(s1.indices[0] == std::vector<int>{0});
  CHECK(s1.indices[1] == std::vector<int>{1});
  CHECK(s1.indices[2] == std::vector<int>{2});

  CHECK(MultiIndexSet::total_degree(2, 2).size() == 6);
  CHECK(MultiIndexSet::total_degree(3, 2).size() == 10);

  // graded lexicographic: degrees ascending, lexicographic within a degree
  const auto s = MultiIndexSet::total_degree(2, 2);
  CHECK(s.indices[0] == std::vector<int>{0, 0});
  CHECK(s.indices[1] == std::vector<int>{0, 1});
  CHECK(s.indices[2] == std::vector<int>{1, 0});
  CHECK(s.indices[3] == std::vector<int>{0, 2});
  CHECK(s.indices[4] == std::vector<int>{1, 1});
  CHECK(s.indices[5] == std::vector<int>{2, 0});

  // binomial count for random (d, D)
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dd(1, 5), DD(0, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = dd(rng), D = DD(rng);
    double binom = 1.0;
    for (int i = 1; i <= D; ++i) binom *= static_cast<double>(d + i) / i;
    CHECK(MultiIndexSet::total_degree(d, D).size() ==
          static_cast<std::size_t>(std::llround(binom)));
  }
}

TEST_CASE("multi-index cap guards against blowup") {
  CHECK_THROWS_AS(MultiIndexSet::total_degree(10, 30), ContractError);
  CHECK_THROWS_AS(PceBasis(std::vector<PolyFamily>(6, PolyFamily::uniform(0, 1)), 12, 100),
                  ContractError);
}

TEST_CASE("basis_eval basics") {
  SUBCASE("entry 0 is exactly 1") {
    const PceBasis basis({PolyFamily::uniform(0.0, 2.0), PolyFamily::gaussian(1.0, 2.0)}, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int i = 0; i < 50; ++i) {
      Vec theta(2);
      theta << u(rng), u(rng);
      CHECK(basis.eval(theta)[0] == 1.0);
    }
  }

  SUBCASE("1D Legendre direct substitution") {
    const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 1);
    Vec theta(1);
    theta << 0.5;
    const Vec phi = basis.eval(theta);
    CHECK(phi[0] == doctest::Approx(1.0));
    CHECK(phi[1] == doctest::Approx(std::sqrt(3.0) * 0.5).epsilon(1e-14));
  }

  SUBCASE("2D tensor product entry") {
    const PceBasis basis = uniform_basis(2, 2);
    Vec theta(2);
    theta << 0.5, -0.5;
    const Vec phi = basis.eval(theta);
    // alpha = (1,1) sits at position 4 in graded-lex order
    CHECK(phi[4] == doctest::Approx(-0.75).epsilon(1e-14));
  }

  SUBCASE("out-of-support points are rejected") {
    const PceBasis basis({PolyFamily::uniform(0.0, 1.0)}, 2);
    Vec theta(1);
    theta << 1.5;
    CHECK_THROWS_AS(basis.eval(theta), DomainError);
  }
}

TEST_CASE("gauss rules: pinned 2-point rule and weight normalization") {
  const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 1);
  const QuadratureRule rule = basis.gauss_rule(2);
  REQUIRE(rule.count() == 2);
  CHECK(rule.nodes(0, 0) == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(rule.nodes(0, 1) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(rule.weights[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(rule.weights[1] == doctest::Approx(0.5).epsilon(1e-14));

  // E[theta^2] over U[-1,1] is exactly 1/3 with two nodes
  double m2 = 0.0;
  for (Eigen::Index q = 0; q < rule.count(); ++q)
    m2 += rule.weights[q] * rule.nodes(0, q) * rule.nodes(0, q);
  CHECK(m2 == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const PceBasis basis2 = uniform_basis(2, 2);
  const QuadratureRule rule2 = basis2.gauss_rule(3);
  CHECK(rule2.count() == 9);
  CHECK(rule2.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quadrature exactness against analytic moments") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> nn(1, 8);
  std::uniform_real_distribution<double> cc(-1.0, 1.0);

  for (int trial = 0; trial < 60; ++trial) {
    const int n = nn(rng);
    const bool herm = trial % 2 == 1;
    const PolyFamily fam = herm ? PolyFamily::gaussian(0.0, 1.0) : PolyFamily::uniform(-1.0, 1.0);
    Vec nodes, weights;
    gauss_rule_1d(fam, n, nodes, weights);
    CHECK(weights.sum() == doctest::Approx(1.0).epsilon(1e-12));

    // random polynomial of degree <= 2n-1
    const int deg = 2 * n - 1;
    Vec coeff(deg + 1);
    for (int i = 0; i <= deg; ++i) coeff[i] = cc(rng);
    double exact = 0.0;
    for (int i = 0; i <= deg; ++i)
      exact += coeff[i] * (herm ? oracles::gaussian_moment(i) : oracles::uniform_moment(i));
    double quad = 0.0;
    for (int i = 0; i < n; ++i) {
      double p = 0.0, xk = 1.0;
      for (int k = 0; k <= deg; ++k) {
        p += coeff[k] * xk;
        xk *= nodes[i];
      }
      quad += weights[i] * p;
    }
    CHECK(quad == doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("orthonormality gram matrices up to d=3, D=4") {
  for (int d = 1; d <= 3; ++d) {
    for (int D = 0; D <= 4; ++D) {
      // mixed families: alternate Legendre (with non-trivial range) and Hermite
      std::vector<PolyFamily> fams;
      for (int i = 0; i < d; ++i)
        fams.push_back(i % 2 == 0 ? PolyFamily::uniform(-0.5, 1.5)
                                  : PolyFamily::gaussian(0.3, 0.7));
      const PceBasis basis(fams, D);
      const QuadratureRule rule = basis.gauss_rule(D + 1);
      const auto N = static_cast<Eigen::Index>(basis.size());
      Mat gram = Mat::Zero(N, N);
      for (Eigen::Index q = 0; q < rule.count(); ++q) {
        const Vec phi = basis.eval(rule.node(q));
        gram += rule.weights[q] * phi * phi.transpose();
      }
      CHECK((gram - Mat::Identity(N, N)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("pce vector moments") {
  SUBCASE("pinned examples") {
    PceVector p;
    p.coeffs = {Vec::Constant(1, 2.0)};
    CHECK(p.mean()[0] == 2.0);
    CHECK(p.variance()[0] == 0.0);

    p.coeffs = {Vec::Constant(1, 2.0), Vec::Constant(1, 0.5), Vec::Constant(1, -0.1)};
    CHECK(p.mean()[0] == doctest::Approx(2.0));
    CHECK(p.variance()[0] == doctest::Approx(0.26).epsilon(1e-14));
  }

  SUBCASE("coefficients of theta itself under U[-1,1]") {
    const PceBasis basis({PolyFamily::uniform(-1.0, 1.0)}, 2);
    const QuadratureRule rule = basis.gauss_rule(4);
    const PceVector p = project([](const Vec& th) { return th; }, basis, rule);
    CHECK(p.coeffs[0][0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(p.coeffs[1][0] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-13));
    CHECK(p.mean()[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(p.variance()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  }

  SUBCASE("projection moments match Monte Carlo within 3 standard errors") {
    const PceBasis basis({PolyFamily::uniform(0.0, 2.0), PolyFamily::uniform(-1.0, 3.0)}, 4);
    const QuadratureRule rule = basis.gauss_rule(8);
    auto f = [](const Vec& th) {
      Vec out(1);
      out[0] = std::sin(th[0]) + 0.3 * th[0] * th[1] * th[1];
      return out;
    };
    const PceVector p = project(f, basis, rule);

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u1(0.0, 2.0), u2(-1.0, 3.0);
    const int N = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < N; ++i) {
      Vec th(2);
      th << u1(rng), u2(rng);
      const double v = f(th)[0];
      sum += v;
      sum2 += v * v;
    }
    const double mc_mean = sum / N;
    const double mc_var = sum2 / N - mc_mean * mc_mean;
    const double se_mean = std::sqrt(mc_var / N);
    CHECK(std::abs(p.mean()[0] - mc_mean) <= 3.0 * se_mean);
    // the degree-4 truncation biases the variance slightly low; allow the
    // truncation gap on top of the sampling error
    CHECK(p.variance()[0] <= mc_var + 3.0 * se_mean);
    CHECK(p.variance()[0] >= 0.9 * mc_var - 3.0 * se_mean);
  }
}

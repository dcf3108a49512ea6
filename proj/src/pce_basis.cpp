#include "ppko/pce_basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ppko {

namespace {
// Support-boundary slack: closed-loop runs evaluate at distribution endpoints.
constexpr double kSupportTol = 1e-9;
}  // namespace

PolyFamily PolyFamily::uniform(double lo, double hi) {
  if (!(hi > lo)) throw ContractError("PolyFamily::uniform: requires hi > lo");
  return PolyFamily(PolyKind::Legendre, 0.5 * (lo + hi), 0.5 * (hi - lo), lo, hi);
}

PolyFamily PolyFamily::gaussian(double mean, double stddev) {
  if (!(stddev > 0.0)) throw ContractError("PolyFamily::gaussian: requires stddev > 0");
  return PolyFamily(PolyKind::Hermite, mean, stddev, -std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity());
}

bool PolyFamily::in_support(double physical) const {
  if (kind_ == PolyKind::Hermite) return std::isfinite(physical);
  const double xi = to_canonical(physical);
  return xi >= -1.0 - kSupportTol && xi <= 1.0 + kSupportTol;
}

double PolyFamily::recur_a(int) const {
  return 0.0;  // both families are symmetric about the canonical origin
}

double PolyFamily::recur_b(int n) const {
  if (n == 0) return 1.0;  // total mass of the probability density
  switch (kind_) {
    case PolyKind::Legendre: {
      const double k = static_cast<double>(n);
      return k * k / (4.0 * k * k - 1.0);
    }
    case PolyKind::Hermite:
      return static_cast<double>(n);
  }
  return 0.0;
}

void PolyFamily::eval_all(int max_degree, double canonical, double* out) const {
  // Normalized three-term recurrence:
  //   sqrt(b_{n+1}) p_{n+1} = (x - a_n) p_n - sqrt(b_n) p_{n-1},   p_0 = 1.
  out[0] = 1.0;
  if (max_degree == 0) return;
  double pm1 = 0.0;
  double p0 = 1.0;
  for (int n = 0; n < max_degree; ++n) {
    const double p1 = ((canonical - recur_a(n)) * p0 - std::sqrt(recur_b(n)) * pm1) /
                      std::sqrt(recur_b(n + 1));
    out[n + 1] = p1;
    pm1 = p0;
    p0 = p1;
  }
}

double PolyFamily::eval(int degree, double canonical) const {
  if (degree < 0) throw ContractError("PolyFamily::eval: degree must be >= 0");
  std::vector<double> vals(static_cast<std::size_t>(degree) + 1);
  eval_all(degree, canonical, vals.data());
  return vals[static_cast<std::size_t>(degree)];
}

double univariate_eval(const PolyFamily& family, int degree, double canonical) {
  return family.eval(degree, canonical);
}

std::size_t total_degree_count(int d, int D, std::size_t cap) {
  if (d < 1 || D < 0) throw ContractError("total_degree_count: requires d >= 1, D >= 0");
  // binom(d+D, D) with incremental overflow/cap guard
  std::size_t count = 1;
  for (int i = 1; i <= D; ++i) {
    const std::size_t num = count * static_cast<std::size_t>(d + i);
    if (num / static_cast<std::size_t>(d + i) != count)
      throw ContractError("total_degree_count: binomial overflow");
    count = num / static_cast<std::size_t>(i);
    if (count > 100 * cap) break;  // far past the cap already
  }
  if (count > cap)
    throw ContractError("multi-index set size " + std::to_string(count) +
                        " exceeds configured cap " + std::to_string(cap));
  return count;
}

MultiIndexSet MultiIndexSet::total_degree(int d, int D, std::size_t cap) {
  const std::size_t expected = total_degree_count(d, D, cap);

  MultiIndexSet set;
  set.dim = d;
  set.max_degree = D;
  set.indices.reserve(expected);

  // Enumerate per total degree; within a degree, recursion over coordinates
  // yields lexicographic order directly.
  std::vector<int> alpha(static_cast<std::size_t>(d), 0);
  for (int total = 0; total <= D; ++total) {
    std::function<void(int, int)> emit = [&](int pos, int remaining) {
      if (pos == d - 1) {
        alpha[static_cast<std::size_t>(pos)] = remaining;
        set.indices.push_back(alpha);
        return;
      }
      for (int v = 0; v <= remaining; ++v) {
        alpha[static_cast<std::size_t>(pos)] = v;
        emit(pos + 1, remaining - v);
      }
    };
    emit(0, total);
  }

  if (set.indices.size() != expected)
    throw NumericError("MultiIndexSet: enumeration count mismatch");
  return set;
}

PceBasis::PceBasis(std::vector<PolyFamily> families, int max_degree, std::size_t cap)
    : families_(std::move(families)),
      index_set_(MultiIndexSet::total_degree(static_cast<int>(families_.size()), max_degree, cap)) {
  if (families_.empty()) throw ContractError("PceBasis: needs at least one family");
}

bool PceBasis::in_support(const Vec& theta) const {
  if (theta.size() != dim()) return false;
  for (int i = 0; i < dim(); ++i)
    if (!families_[static_cast<std::size_t>(i)].in_support(theta[i])) return false;
  return true;
}

Vec PceBasis::eval(const Vec& theta) const {
  if (theta.size() != dim())
    throw ContractError("PceBasis::eval: theta has dimension " + std::to_string(theta.size()) +
                        ", basis expects " + std::to_string(dim()));
  if (!in_support(theta))
    throw DomainError("PceBasis::eval: parameter point outside the distribution support");

  const int d = dim();
  const int D = degree();

  // Univariate values per dimension up to the max degree.
  Mat uni(D + 1, d);
  for (int i = 0; i < d; ++i) {
    const auto& fam = families_[static_cast<std::size_t>(i)];
    fam.eval_all(D, fam.to_canonical(theta[i]), uni.col(i).data());
  }

  Vec out(static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) {
    const auto& alpha = index_set_.indices[k];
    double v = 1.0;
    for (int i = 0; i < d; ++i) v *= uni(alpha[static_cast<std::size_t>(i)], i);
    out[static_cast<Eigen::Index>(k)] = v;
  }
  out[0] = 1.0;
  return out;
}

Mat PceBasis::eval_batch(const Mat& thetas) const {
  if (thetas.rows() != dim()) throw ContractError("PceBasis::eval_batch: row count != dim");
  Mat out(static_cast<Eigen::Index>(size()), thetas.cols());
  for (Eigen::Index j = 0; j < thetas.cols(); ++j) out.col(j) = eval(thetas.col(j));
  return out;
}

void gauss_rule_1d(const PolyFamily& family, int n, Vec& nodes, Vec& weights) {
  if (n < 1) throw ContractError("gauss_rule_1d: requires n >= 1");

  // Golub-Welsch: eigendecomposition of the symmetric tridiagonal Jacobi
  // matrix of the three-term recurrence. Nodes are the eigenvalues; weights
  // are b_0 * (first eigenvector component)^2.
  Vec diag = Vec::Zero(n);
  Vec sub = Vec::Zero(std::max(n - 1, 0));
  for (int i = 0; i < n; ++i) diag[i] = family.recur_a(i);
  for (int i = 1; i < n; ++i) sub[i - 1] = std::sqrt(family.recur_b(i));

  Eigen::SelfAdjointEigenSolver<Mat> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success)
    throw NumericError("gauss_rule_1d: tridiagonal eigensolve failed");

  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = family.to_physical(solver.eigenvalues()[i]);
    const double v0 = solver.eigenvectors()(0, i);
    weights[i] = family.recur_b(0) * v0 * v0;
  }
}

QuadratureRule PceBasis::gauss_rule(int n_per_dim) const {
  const int d = dim();
  std::vector<Vec> nodes_1d(static_cast<std::size_t>(d));
  std::vector<Vec> weights_1d(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i)
    gauss_rule_1d(families_[static_cast<std::size_t>(i)], n_per_dim, nodes_1d[static_cast<std::size_t>(i)],
                  weights_1d[static_cast<std::size_t>(i)]);

  Eigen::Index total = 1;
  for (int i = 0; i < d; ++i) total *= n_per_dim;

  QuadratureRule rule;
  rule.nodes.resize(d, total);
  rule.weights.resize(total);

  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (Eigen::Index q = 0; q < total; ++q) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      rule.nodes(i, q) = nodes_1d[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
      w *= weights_1d[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    }
    rule.weights[q] = w;
    for (int i = d - 1; i >= 0; --i) {  // odometer increment, last dim fastest
      if (++idx[static_cast<std::size_t>(i)] < n_per_dim) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return rule;
}

Vec PceVector::mean() const {
  if (coeffs.empty()) throw ContractError("PceVector::mean: empty coefficient list");
  return coeffs.front();
}

Vec PceVector::variance() const {
  if (coeffs.empty()) throw ContractError("PceVector::variance: empty coefficient list");
  Vec var = Vec::Zero(coeffs.front().size());
  for (std::size_t k = 1; k < coeffs.size(); ++k) var += coeffs[k].cwiseProduct(coeffs[k]);
  return var;
}

PceVector project(const std::function<Vec(const Vec&)>& f, const PceBasis& basis,
                  const QuadratureRule& quad) {
  PceVector p;
  for (Eigen::Index q = 0; q < quad.count(); ++q) {
    const Vec theta = quad.node(q);
    const Vec fval = f(theta);
    const Vec phi = basis.eval(theta);
    if (p.coeffs.empty()) p.coeffs.assign(basis.size(), Vec::Zero(fval.size()));
    for (std::size_t k = 0; k < basis.size(); ++k)
      p.coeffs[k] += quad.weights[q] * phi[static_cast<Eigen::Index>(k)] * fval;
  }
  return p;
}

}  // namespace ppko

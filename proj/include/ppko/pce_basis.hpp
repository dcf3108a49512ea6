#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ppko/common.hpp"
#include "ppko/errors.hpp"

namespace ppko {

enum class PolyKind { Legendre, Hermite };

/**
 * @brief One coordinate of the parameter vector: a classical orthonormal
 * polynomial family together with the affine map between the physical
 * parameter range and the family's canonical support.
 *
 * Legendre is orthonormal for the uniform density on [-1,1] (density 1/2),
 * Hermite (probabilists') for the standard Gaussian. All public interfaces of
 * the library take physical coordinates; the canonical support is internal.
 */
class PolyFamily {
 public:
  /// Uniform distribution on [lo, hi); Legendre basis.
  static PolyFamily uniform(double lo, double hi);
  /// Gaussian with the given mean/stddev; probabilists' Hermite basis.
  static PolyFamily gaussian(double mean, double stddev);

  PolyKind kind() const { return kind_; }

  double to_canonical(double physical) const { return (physical - shift_) / scale_; }
  double to_physical(double canonical) const { return shift_ + scale_ * canonical; }

  /// Support check in physical coordinates (Hermite support is all of R).
  bool in_support(double physical) const;

  /// Orthonormal value phi_n at a canonical coordinate.
  double eval(int degree, double canonical) const;

  /// Fills out[0..max_degree] with orthonormal values at a canonical point.
  void eval_all(int max_degree, double canonical, double* out) const;

  /// Recurrence coefficients a_n, b_n of the monic orthogonal polynomials
  /// with respect to the canonical probability density (b_0 = 1).
  double recur_a(int n) const;
  double recur_b(int n) const;

  double param_lo() const { return lo_; }
  double param_hi() const { return hi_; }
  double param_mean() const { return shift_; }
  double param_std() const { return scale_; }

 private:
  PolyFamily(PolyKind kind, double shift, double scale, double lo, double hi)
      : kind_(kind), shift_(shift), scale_(scale), lo_(lo), hi_(hi) {}

  PolyKind kind_;
  double shift_;  // physical = shift + scale * canonical
  double scale_;
  double lo_;  // physical support bounds (Legendre only)
  double hi_;
};

/// Number of multi-indices with total degree <= D in d dimensions,
/// binom(d+D, D). Throws ContractError if the count exceeds `cap`.
std::size_t total_degree_count(int d, int D, std::size_t cap);

/**
 * @brief Total-degree truncated multi-index set in graded-lexicographic order:
 * total degree ascending, ties broken lexicographically. Index 0 is the
 * all-zeros constant term and degree truncation is a prefix of the list.
 */
struct MultiIndexSet {
  static constexpr std::size_t kDefaultCap = 5000;

  int dim = 0;
  int max_degree = 0;
  std::vector<std::vector<int>> indices;

  static MultiIndexSet total_degree(int d, int D, std::size_t cap = kDefaultCap);

  std::size_t size() const { return indices.size(); }
};

/// Tensor-product quadrature rule; nodes are stored in physical coordinates
/// and weights integrate the joint probability density (they sum to 1).
struct QuadratureRule {
  Mat nodes;    // dim x n_nodes
  Vec weights;  // n_nodes

  Eigen::Index count() const { return weights.size(); }
  Vec node(Eigen::Index q) const { return nodes.col(q); }
};

/**
 * @brief Multivariate orthonormal polynomial chaos basis: tensor products of
 * univariate orthonormal polynomials, truncated by total degree.
 *
 * Immutable after construction and safe to share across threads.
 */
class PceBasis {
 public:
  PceBasis(std::vector<PolyFamily> families, int max_degree,
           std::size_t cap = MultiIndexSet::kDefaultCap);

  int dim() const { return static_cast<int>(families_.size()); }
  int degree() const { return index_set_.max_degree; }
  /// Number of basis terms N_D = binom(d+D, D).
  std::size_t size() const { return index_set_.size(); }

  const std::vector<PolyFamily>& families() const { return families_; }
  const MultiIndexSet& index_set() const { return index_set_; }

  bool in_support(const Vec& theta) const;

  /// Evaluates all basis functions at a physical parameter point.
  /// Entry 0 is always exactly 1. Throws DomainError outside the support.
  Vec eval(const Vec& theta) const;

  /// Evaluates the basis at every column of `thetas` (d x M), returning N x M.
  Mat eval_batch(const Mat& thetas) const;

  /// Tensor-product Gauss rule with n_per_dim nodes per dimension, exact for
  /// per-dimension degree <= 2*n_per_dim - 1 against the joint density.
  QuadratureRule gauss_rule(int n_per_dim) const;

 private:
  std::vector<PolyFamily> families_;
  MultiIndexSet index_set_;
};

/// Orthonormal univariate value at a canonical coordinate (thin wrapper used
/// by tests and documentation examples).
double univariate_eval(const PolyFamily& family, int degree, double canonical);

/// Gauss rule for a single family (canonical 1D nodes mapped to physical).
void gauss_rule_1d(const PolyFamily& family, int n, Vec& nodes, Vec& weights);

/**
 * @brief PCE coefficients of a vector-valued quantity; mean is the 0th
 * coefficient and the variance is the sum of squared higher coefficients.
 */
struct PceVector {
  std::vector<Vec> coeffs;  // one vector per basis index

  Vec mean() const;
  Vec variance() const;
};

/// Coefficient extraction by quadrature inner products:
/// p_k = sum_q w_q f(theta_q) Phi_k(theta_q).
PceVector project(const std::function<Vec(const Vec&)>& f, const PceBasis& basis,
                  const QuadratureRule& quad);

}  // namespace ppko

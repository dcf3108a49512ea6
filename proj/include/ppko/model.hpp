#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ppko/dataset.hpp"
#include "ppko/dictionary.hpp"
#include "ppko/pce_basis.hpp"

namespace ppko {

/**
 * @brief Koopman model with PCE-parametrized transition matrices
 * A(theta) = sum_k A_k phi_k(theta), B(theta) = sum_k B_k phi_k(theta) over
 * the lifted state z = Psi(x), plus the coordinate-selecting output matrix C.
 *
 * Immutable after training; safe to share across threads.
 */
struct PpkoModel {
  PceBasis basis;
  Dictionary dict;
  std::vector<Mat> A_coeffs;  // N_K matrices, n_psi x n_psi
  std::vector<Mat> B_coeffs;  // N_K matrices, n_psi x n_u
  Mat C;                      // n_x x n_psi

  int n_x() const { return dict.n_x(); }
  int n_u() const { return B_coeffs.empty() ? 0 : static_cast<int>(B_coeffs.front().cols()); }
  int n_psi() const { return dict.n_psi(); }
  std::size_t n_terms() const { return A_coeffs.size(); }

  /// [0 I 0] selecting the coordinate block of z = [1; x; g(x)].
  static Mat output_matrix(int n_x, int n_psi);

  Mat A_at(const Vec& theta) const;
  Mat B_at(const Vec& theta) const;

  /// One lifted step z+ = A(theta) z + B(theta) u. Throws DomainError for
  /// theta outside the support; u may be empty when n_u = 0.
  Vec step(const Vec& z, const Vec& u, const Vec& theta) const;

  /// Predicted states x_1..x_H (columns) from x_0 under the input sequence
  /// U_seq (n_u x H; pass a 0 x H matrix for autonomous rollouts).
  Mat rollout(const Vec& x0, const Mat& U_seq, const Vec& theta) const;

  void check_consistent() const;
};

/// Extends a model with zero-valued extra observables so that n_psi becomes
/// `n_psi_target`; predictions are unchanged, only dimensions grow.
PpkoModel pad_observables(const PpkoModel& model, int n_psi_target);

struct FitOptions {
  double ridge = 0.0;
  int threads = 1;
  bool warn_underdetermined = true;
};

struct FitResult {
  std::vector<Mat> A;
  std::vector<Mat> B;
};

/**
 * @brief Closed-form PCE-coefficient identification.
 *
 * Minimizes sum_j ||Psi(x_j+) - sum_k phi_k(theta_j)(A_k Psi(x_j) + B_k u_j)||^2
 * + ridge * ||[A;B]||_F^2 via the regularized normal equations over the
 * Kronecker regressor r_j = phi(theta_j) (x) [Psi(x_j); u_j], solved once over
 * the whole dataset.
 *
 * With ridge = 0 a singular normal matrix raises NumericError naming the
 * number of deficient dimensions; with ridge > 0 the Cholesky retries with
 * 10x escalated regularization before giving up.
 */
FitResult fit_coefficients(const Dataset& data, const Dictionary& dict, const PceBasis& basis,
                           const FitOptions& opts = {});

/// Fast path used by the training loop: lifted states and basis values are
/// already available (Z = lift(X), Zp = lift(Xp), Phi = basis at Theta).
FitResult fit_coefficients_lifted(const Mat& Z, const Mat& U, const Mat& Zp, const Mat& Phi,
                                  const FitOptions& opts = {});

/// Validation metric used for early stopping and best-model selection.
/// OneStep is the training residual on held-out snapshots; Rollout scores
/// multi-step prediction error along held-out trajectories, which also
/// penalizes models whose lifted dynamics drift or blow up over a horizon
/// even when their one-step residual is tiny.
enum class SelectionMetric { OneStep, Rollout };

struct TrainConfig {
  int epochs_max = 1000;
  int batch_size = 2048;
  int patience = 100;
  double ridge = 0.0;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  AdamConfig adam;
  SelectionMetric selection = SelectionMetric::OneStep;
  int rollout_horizon = 40;  // steps scored by the Rollout metric

  // Optional stability screen: prefer epoch snapshots whose A(theta) spectral
  // radius stays below `stability_cap` at every column of `stability_nodes`
  // (typically the quadrature grid the model will be deployed on). Validation
  // data cannot see those evaluation points, so an unscreened best-validation
  // snapshot can still blow up there over a long prediction horizon.
  Mat stability_nodes;  // d x n_nodes; empty disables the screen
  double stability_cap = std::numeric_limits<double>::infinity();

  int threads = 1;
  bool verbose = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;       // mean squared residual after the epoch's fit
  double train_obj_pre = 0.0;   // regularized objective before the closed-form fit
  double train_obj_post = 0.0;  // regularized objective after the closed-form fit
  double val_mse = 0.0;
  double val_rollout_mse = 0.0;  // populated under SelectionMetric::Rollout
  double rho_max = 0.0;          // worst A(theta) spectral radius on the screen grid
  double best_val_mse = 0.0;     // best value of the selection metric so far
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  int n_train_snapshots = 0;
  int n_val_snapshots = 0;
};

/**
 * @brief Alternating EDMD-DL training.
 *
 * Per epoch: (a) minibatch Adam updates of the dictionary with the
 * coefficient matrices frozen, (b) closed-form coefficient refit over the full
 * training set, (c) validation loss. Early-stops after `patience` epochs
 * without validation improvement and returns the best-validation snapshot.
 * The split is by whole trajectories to avoid leakage.
 */
PpkoModel train_edmd_dl(const Dataset& data, Dictionary dict, const PceBasis& basis,
                        const TrainConfig& cfg, TrainLog* log = nullptr);

/// Mean squared one-step residual of the model over a dataset.
double model_mse(const PpkoModel& model, const Dataset& data);

}  // namespace ppko

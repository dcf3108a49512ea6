#pragma once

#include <vector>

#include "ppko/common.hpp"
#include "ppko/errors.hpp"

namespace ppko {

/**
 * @brief Trainable observable map Psi(x) = [1; x; g(x; w)].
 *
 * The first 1 + n_x entries are fixed (constant and coordinate functions) and
 * bypass the learned weights entirely; g is a fully connected network with
 * tanh hidden activations and a linear output of width n_learn. n_learn = 0
 * degenerates to the plain [1; x] lift with no trainable parameters.
 *
 * lift() is pure and thread-safe; set_params() must be externally serialized.
 */
class Dictionary {
 public:
  /// Glorot-style uniform initialization, seeded for reproducibility.
  Dictionary(int n_x, int n_learn, std::vector<int> hidden_widths, std::uint64_t seed);

  int n_x() const { return n_x_; }
  int n_learn() const { return n_learn_; }
  int n_psi() const { return 1 + n_x_ + n_learn_; }
  const std::vector<int>& hidden_widths() const { return hidden_; }

  /// Lifted state z = [1; x; g(x)]. Throws DomainError on non-finite input.
  Vec lift(const Vec& x) const;

  /// Column-wise lift of a batch X (n_x x M) -> (n_psi x M).
  Mat lift_batch(const Mat& X) const;

  Eigen::Index param_count() const { return param_count_; }
  Vec params() const;
  void set_params(const Vec& p);

  /// Layer weights/biases, hidden layers first, output layer last.
  const std::vector<Mat>& layer_weights() const { return weights_; }
  const std::vector<Vec>& layer_biases() const { return biases_; }
  void set_layers(std::vector<Mat> weights, std::vector<Vec> biases);

  /// Forward pass caches for reverse-mode accumulation.
  struct Forward {
    std::vector<Mat> post;  // post[0] = input batch, post[i] = tanh activations
    Mat output;             // n_learn x M
  };
  Forward forward(const Mat& X) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Forward& fwd, const Mat& d_output, Vec& grad) const;

 private:
  int n_x_;
  int n_learn_;
  std::vector<int> hidden_;
  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
  Eigen::Index param_count_ = 0;
};

/// One EDMD regression batch with the PCE coefficient matrices held fixed.
/// Phi holds the basis values per sample (N_K x M); A are n_psi x n_psi,
/// B are n_psi x n_u (n_u = 0 for autonomous data).
struct EdmdBatch {
  const Mat& X;
  const Mat& U;
  const Mat& Xp;
  const Mat& Phi;
  const std::vector<Mat>& A;
  const std::vector<Mat>& B;
};

/// Mean squared one-step residual over the batch:
///   (1/M) sum_j || Psi(x_j+) - A(theta_j) Psi(x_j) - B(theta_j) u_j ||^2.
double edmd_loss(const Dictionary& dict, const EdmdBatch& batch);

/// Loss plus its gradient with respect to the dictionary parameters,
/// accumulated through both occurrences of Psi by reverse mode.
double edmd_loss_and_grad(const Dictionary& dict, const EdmdBatch& batch, Vec& grad);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam optimizer state over a flat parameter vector.
class Adam {
 public:
  Adam(Eigen::Index n, AdamConfig cfg = {});
  void step(Vec& params, const Vec& grad);
  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  Vec m_;
  Vec v_;
  long t_ = 0;
};

/// Applies one Adam update to the dictionary weights in place.
void update_step(Dictionary& dict, const Vec& grad, Adam& optimizer);

}  // namespace ppko

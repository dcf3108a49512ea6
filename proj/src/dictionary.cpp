#include "ppko/dictionary.hpp"

#include <cmath>
#include <random>

namespace ppko {

Dictionary::Dictionary(int n_x, int n_learn, std::vector<int> hidden_widths, std::uint64_t seed)
    : n_x_(n_x), n_learn_(n_learn), hidden_(std::move(hidden_widths)) {
  if (n_x < 1) throw ContractError("Dictionary: requires n_x >= 1");
  if (n_learn < 0) throw ContractError("Dictionary: requires n_learn >= 0");
  for (int w : hidden_)
    if (w < 1) throw ContractError("Dictionary: hidden widths must be positive");

  if (n_learn_ == 0) return;  // fixed features only

  std::mt19937_64 rng(seed);
  std::vector<int> dims;
  dims.push_back(n_x_);
  for (int w : hidden_) dims.push_back(w);
  dims.push_back(n_learn_);

  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Mat W(fan_out, fan_in);
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = u(rng);
    weights_.push_back(std::move(W));
    biases_.push_back(Vec::Zero(fan_out));
    param_count_ += static_cast<Eigen::Index>(fan_out) * fan_in + fan_out;
  }
}

Vec Dictionary::lift(const Vec& x) const {
  if (x.size() != n_x_) throw ContractError("Dictionary::lift: state dimension mismatch");
  if (!x.allFinite()) throw DomainError("Dictionary::lift: non-finite state");
  Vec z(n_psi());
  z[0] = 1.0;
  z.segment(1, n_x_) = x;
  if (n_learn_ > 0) {
    Mat h = x;
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l)
      h = ((weights_[l] * h).colwise() + biases_[l]).array().tanh().matrix();
    z.segment(1 + n_x_, n_learn_) = weights_.back() * h + biases_.back();
  }
  return z;
}

Mat Dictionary::lift_batch(const Mat& X) const {
  if (X.rows() != n_x_) throw ContractError("Dictionary::lift_batch: state dimension mismatch");
  if (!X.allFinite()) throw DomainError("Dictionary::lift_batch: non-finite state batch");
  Mat Z(n_psi(), X.cols());
  Z.row(0).setOnes();
  Z.middleRows(1, n_x_) = X;
  if (n_learn_ > 0) {
    Mat h = X;
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l)
      h = ((weights_[l] * h).colwise() + biases_[l]).array().tanh().matrix();
    Z.middleRows(1 + n_x_, n_learn_) = (weights_.back() * h).colwise() + biases_.back();
  }
  return Z;
}

Vec Dictionary::params() const {
  Vec p(param_count_);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& W = weights_[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      p.segment(at, W.cols()) = W.row(i).transpose();
      at += W.cols();
    }
    p.segment(at, biases_[l].size()) = biases_[l];
    at += biases_[l].size();
  }
  return p;
}

void Dictionary::set_params(const Vec& p) {
  if (p.size() != param_count_) throw ContractError("Dictionary::set_params: size mismatch");
  if (!p.allFinite()) throw NumericError("Dictionary::set_params: non-finite parameters");
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto& W = weights_[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      W.row(i) = p.segment(at, W.cols()).transpose();
      at += W.cols();
    }
    biases_[l] = p.segment(at, biases_[l].size());
    at += biases_[l].size();
  }
}

void Dictionary::set_layers(std::vector<Mat> weights, std::vector<Vec> biases) {
  if (weights.size() != weights_.size() || biases.size() != biases_.size())
    throw ContractError("Dictionary::set_layers: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (weights[l].rows() != weights_[l].rows() || weights[l].cols() != weights_[l].cols() ||
        biases[l].size() != biases_[l].size())
      throw ContractError("Dictionary::set_layers: layer shape mismatch");
  weights_ = std::move(weights);
  biases_ = std::move(biases);
}

Dictionary::Forward Dictionary::forward(const Mat& X) const {
  Forward fwd;
  fwd.post.push_back(X);
  if (n_learn_ == 0) {
    fwd.output.resize(0, X.cols());
    return fwd;
  }
  Mat h = X;
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    h = ((weights_[l] * h).colwise() + biases_[l]).array().tanh().matrix();
    fwd.post.push_back(h);
  }
  fwd.output = (weights_.back() * h).colwise() + biases_.back();
  return fwd;
}

void Dictionary::backward(const Forward& fwd, const Mat& d_output, Vec& grad) const {
  if (n_learn_ == 0) return;
  if (grad.size() != param_count_)
    throw ContractError("Dictionary::backward: gradient buffer size mismatch");

  const std::size_t n_layers = weights_.size();
  Mat d = d_output;  // gradient w.r.t. current layer output

  // Walk layers back to front; parameter offsets mirror params() layout.
  std::vector<Eigen::Index> offsets(n_layers);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = at;
    at += weights_[l].size() + biases_[l].size();
  }

  for (std::size_t li = n_layers; li-- > 0;) {
    const Mat& input = fwd.post[li];  // input to layer li
    if (li + 1 < n_layers) {
      // d currently holds dL/d(post-activation); fold in tanh'.
      d = d.cwiseProduct((1.0 - fwd.post[li + 1].array().square()).matrix());
    }
    const Mat dW = d * input.transpose();
    const Vec db = d.rowwise().sum();
    Eigen::Index o = offsets[li];
    for (Eigen::Index i = 0; i < dW.rows(); ++i) {
      grad.segment(o, dW.cols()) += dW.row(i).transpose();
      o += dW.cols();
    }
    grad.segment(o, db.size()) += db;
    if (li > 0) d = weights_[li].transpose() * d;
  }
}

namespace {

void check_batch(const Dictionary& dict, const EdmdBatch& b) {
  const Eigen::Index M = b.X.cols();
  if (M == 0) throw ContractError("edmd batch: empty");
  if (b.Xp.cols() != M || b.Phi.cols() != M)
    throw ContractError("edmd batch: column count mismatch");
  if (b.X.rows() != dict.n_x() || b.Xp.rows() != dict.n_x())
    throw ContractError("edmd batch: state dimension mismatch");
  if (b.A.size() != static_cast<std::size_t>(b.Phi.rows()))
    throw ContractError("edmd batch: coefficient count != basis size");
  const Eigen::Index n_psi = dict.n_psi();
  for (const auto& Ak : b.A)
    if (Ak.rows() != n_psi || Ak.cols() != n_psi)
      throw ContractError("edmd batch: A_k dimension mismatch");
  const Eigen::Index n_u = b.U.rows();
  if (n_u > 0) {
    if (b.U.cols() != M) throw ContractError("edmd batch: input column count mismatch");
    if (b.B.size() != b.A.size()) throw ContractError("edmd batch: B_k count mismatch");
    for (const auto& Bk : b.B)
      if (Bk.rows() != n_psi || Bk.cols() != n_u)
        throw ContractError("edmd batch: B_k dimension mismatch");
  }
}

// Residual R = Zp - sum_k phi_k .* (A_k Z) - sum_k phi_k .* (B_k U).
Mat edmd_residual(const EdmdBatch& b, const Mat& Z, const Mat& Zp) {
  Mat R = Zp;
  const std::size_t n_k = b.A.size();
  for (std::size_t k = 0; k < n_k; ++k) {
    const auto phi_k = b.Phi.row(static_cast<Eigen::Index>(k)).array();
    R -= ((b.A[k] * Z).array().rowwise() * phi_k).matrix();
    if (b.U.rows() > 0) R -= ((b.B[k] * b.U).array().rowwise() * phi_k).matrix();
  }
  return R;
}

}  // namespace

double edmd_loss(const Dictionary& dict, const EdmdBatch& batch) {
  check_batch(dict, batch);
  const Mat Z = dict.lift_batch(batch.X);
  const Mat Zp = dict.lift_batch(batch.Xp);
  const Mat R = edmd_residual(batch, Z, Zp);
  return R.squaredNorm() / static_cast<double>(batch.X.cols());
}

double edmd_loss_and_grad(const Dictionary& dict, const EdmdBatch& batch, Vec& grad) {
  check_batch(dict, batch);
  const Eigen::Index M = batch.X.cols();

  const Dictionary::Forward fwd_x = dict.forward(batch.X);
  const Dictionary::Forward fwd_xp = dict.forward(batch.Xp);

  const Eigen::Index n_x = dict.n_x();
  const Eigen::Index n_learn = dict.n_learn();
  Mat Z(dict.n_psi(), M);
  Z.row(0).setOnes();
  Z.middleRows(1, n_x) = batch.X;
  Mat Zp(dict.n_psi(), M);
  Zp.row(0).setOnes();
  Zp.middleRows(1, n_x) = batch.Xp;
  if (n_learn > 0) {
    Z.middleRows(1 + n_x, n_learn) = fwd_x.output;
    Zp.middleRows(1 + n_x, n_learn) = fwd_xp.output;
  }

  const Mat R = edmd_residual(batch, Z, Zp);
  const double loss = R.squaredNorm() / static_cast<double>(M);

  grad = Vec::Zero(dict.param_count());
  if (n_learn == 0) return loss;

  const double scale = 2.0 / static_cast<double>(M);

  // dL/dZp = scale * R; dL/dZ = -scale * sum_k phi_k .* (A_k^T R).
  Mat dZ = Mat::Zero(dict.n_psi(), M);
  for (std::size_t k = 0; k < batch.A.size(); ++k) {
    const auto phi_k = batch.Phi.row(static_cast<Eigen::Index>(k)).array();
    dZ -= (batch.A[k].transpose() * ((R.array().rowwise() * phi_k).matrix()));
  }

  // Only the learned block carries parameters.
  dict.backward(fwd_xp, scale * R.middleRows(1 + n_x, n_learn), grad);
  dict.backward(fwd_x, scale * dZ.middleRows(1 + n_x, n_learn), grad);
  return loss;
}

Adam::Adam(Eigen::Index n, AdamConfig cfg) : cfg_(cfg), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

void Adam::step(Vec& params, const Vec& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ContractError("Adam::step: size mismatch");
  ++t_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  params -= (cfg_.lr * (m_ / bc1).array() / ((v_ / bc2).array().sqrt() + cfg_.eps)).matrix();
}

void update_step(Dictionary& dict, const Vec& grad, Adam& optimizer) {
  Vec p = dict.params();
  optimizer.step(p, grad);
  dict.set_params(p);
}

}  // namespace ppko

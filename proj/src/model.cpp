#include "ppko/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace ppko {

Mat PpkoModel::output_matrix(int n_x, int n_psi) {
  Mat C = Mat::Zero(n_x, n_psi);
  C.block(0, 1, n_x, n_x).setIdentity();
  return C;
}

Mat PpkoModel::A_at(const Vec& theta) const {
  const Vec phi = basis.eval(theta);
  Mat A = Mat::Zero(n_psi(), n_psi());
  for (std::size_t k = 0; k < A_coeffs.size(); ++k)
    A += phi[static_cast<Eigen::Index>(k)] * A_coeffs[k];
  return A;
}

Mat PpkoModel::B_at(const Vec& theta) const {
  const Vec phi = basis.eval(theta);
  Mat B = Mat::Zero(n_psi(), n_u());
  for (std::size_t k = 0; k < B_coeffs.size(); ++k)
    B += phi[static_cast<Eigen::Index>(k)] * B_coeffs[k];
  return B;
}

Vec PpkoModel::step(const Vec& z, const Vec& u, const Vec& theta) const {
  if (z.size() != n_psi()) throw ContractError("PpkoModel::step: lifted state size mismatch");
  Vec zp = A_at(theta) * z;
  if (n_u() > 0 && u.size() > 0) {
    if (u.size() != n_u()) throw ContractError("PpkoModel::step: input size mismatch");
    zp += B_at(theta) * u;
  }
  return zp;
}

Mat PpkoModel::rollout(const Vec& x0, const Mat& U_seq, const Vec& theta) const {
  const Eigen::Index H = U_seq.cols();
  Mat X(n_x(), H);
  if (H == 0) return X;
  const Mat A = A_at(theta);
  const Mat B = n_u() > 0 ? B_at(theta) : Mat(n_psi(), 0);
  Vec z = dict.lift(x0);
  for (Eigen::Index t = 0; t < H; ++t) {
    z = A * z;
    if (n_u() > 0 && U_seq.rows() > 0) z += B * U_seq.col(t);
    X.col(t) = C * z;
  }
  return X;
}

void PpkoModel::check_consistent() const {
  const Eigen::Index np = n_psi();
  if (A_coeffs.size() != basis.size())
    throw ContractError("PpkoModel: coefficient count != basis size");
  for (const auto& Ak : A_coeffs)
    if (Ak.rows() != np || Ak.cols() != np) throw ContractError("PpkoModel: A_k shape mismatch");
  for (const auto& Bk : B_coeffs)
    if (Bk.rows() != np) throw ContractError("PpkoModel: B_k shape mismatch");
  if (C.rows() != n_x() || C.cols() != np) throw ContractError("PpkoModel: C shape mismatch");
}

PpkoModel pad_observables(const PpkoModel& model, int n_psi_target) {
  const int np_old = model.n_psi();
  if (n_psi_target == np_old) return model;
  if (n_psi_target < np_old)
    throw ContractError("pad_observables: target n_psi below the model's " +
                        std::to_string(np_old));
  if (model.dict.n_learn() == 0)
    throw ContractError("pad_observables: base model has no learned features to extend");

  const int extra = n_psi_target - np_old;
  const int n_learn_new = model.dict.n_learn() + extra;

  Dictionary dict(model.dict.n_x(), n_learn_new, model.dict.hidden_widths(), 0);
  auto weights = model.dict.layer_weights();
  auto biases = model.dict.layer_biases();
  // Extra output rows are zero: the padded observables are identically zero.
  Mat Wout = Mat::Zero(n_learn_new, weights.back().cols());
  Wout.topRows(model.dict.n_learn()) = weights.back();
  Vec bout = Vec::Zero(n_learn_new);
  bout.head(model.dict.n_learn()) = biases.back();
  weights.back() = Wout;
  biases.back() = bout;
  dict.set_layers(std::move(weights), std::move(biases));

  PpkoModel out{model.basis, std::move(dict), {}, {}, Mat()};
  const int np = n_psi_target;
  for (const auto& Ak : model.A_coeffs) {
    Mat A = Mat::Zero(np, np);
    A.topLeftCorner(np_old, np_old) = Ak;
    out.A_coeffs.push_back(std::move(A));
  }
  for (const auto& Bk : model.B_coeffs) {
    Mat B = Mat::Zero(np, Bk.cols());
    B.topRows(np_old) = Bk;
    out.B_coeffs.push_back(std::move(B));
  }
  out.C = Mat::Zero(model.n_x(), np);
  out.C.leftCols(np_old) = model.C;
  out.check_consistent();
  return out;
}

namespace {

struct GramAccumulator {
  Mat G;    // D_r x D_r
  Mat rhs;  // D_r x n_psi

  GramAccumulator(Eigen::Index dim, Eigen::Index n_psi)
      : G(Mat::Zero(dim, dim)), rhs(Mat::Zero(dim, n_psi)) {}

  // One contiguous block of samples [begin, end).
  void accumulate(const Mat& Z, const Mat& U, const Mat& Zp, const Mat& Phi, Eigen::Index begin,
                  Eigen::Index end) {
    const Eigen::Index n_psi = Z.rows();
    const Eigen::Index n_u = U.rows();
    const Eigen::Index p = n_psi + n_u;
    const Eigen::Index n_k = Phi.rows();
    constexpr Eigen::Index kChunk = 1024;

    Mat R(n_k * p, kChunk);
    for (Eigen::Index at = begin; at < end; at += kChunk) {
      const Eigen::Index m = std::min(kChunk, end - at);
      auto Rm = R.leftCols(m);
      for (Eigen::Index k = 0; k < n_k; ++k) {
        const auto phi_k = Phi.row(k).segment(at, m).array();
        Rm.middleRows(k * p, n_psi) =
            (Z.middleCols(at, m).array().rowwise() * phi_k).matrix();
        if (n_u > 0)
          Rm.middleRows(k * p + n_psi, n_u) =
              (U.middleCols(at, m).array().rowwise() * phi_k).matrix();
      }
      G.selfadjointView<Eigen::Lower>().rankUpdate(Rm, 1.0);
      rhs.noalias() += Rm * Zp.middleCols(at, m).transpose();
    }
  }
};

Mat solve_normal_equations(Mat G, const Mat& rhs, double ridge) {
  const Eigen::Index dim = G.rows();
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();

  double lam = ridge;
  for (int attempt = 0; attempt < 7; ++attempt) {
    Mat G_reg = G;
    if (lam > 0.0) G_reg.diagonal().array() += lam;
    Eigen::LLT<Mat> llt(G_reg);
    if (llt.info() == Eigen::Success) {
      if (attempt > 0)
        std::cerr << "fit_coefficients: Cholesky needed ridge escalation to " << lam << "\n";
      return llt.solve(rhs);
    }
    if (ridge == 0.0) break;  // no escalation path without a ridge
    lam = (lam == 0.0) ? 1e-12 : 10.0 * lam;
  }

  if (ridge == 0.0) {
    // Name the deficiency so callers can diagnose their dictionary/data.
    Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
    const double emax = std::max(es.eigenvalues().maxCoeff(), 0.0);
    const double tol = std::max(1e-12 * emax, 1e-300);
    const Eigen::Index deficient = (es.eigenvalues().array() < tol).count();
    throw NumericError("fit_coefficients: singular normal matrix with ridge 0: " +
                       std::to_string(deficient) + " deficient of " + std::to_string(dim) +
                       " dimensions");
  }
  throw NumericError("fit_coefficients: Cholesky failed after ridge escalation");
}

FitResult unpack_solution(const Mat& W, Eigen::Index n_k, Eigen::Index n_psi, Eigen::Index n_u) {
  FitResult fit;
  const Eigen::Index p = n_psi + n_u;
  for (Eigen::Index k = 0; k < n_k; ++k) {
    fit.A.push_back(W.middleRows(k * p, n_psi).transpose());
    if (n_u > 0) fit.B.push_back(W.middleRows(k * p + n_psi, n_u).transpose());
  }
  return fit;
}

double stacked_sq_norm(const FitResult& fit) {
  double s = 0.0;
  for (const auto& A : fit.A) s += A.squaredNorm();
  for (const auto& B : fit.B) s += B.squaredNorm();
  return s;
}

}  // namespace

FitResult fit_coefficients_lifted(const Mat& Z, const Mat& U, const Mat& Zp, const Mat& Phi,
                                  const FitOptions& opts) {
  const Eigen::Index M = Z.cols();
  const Eigen::Index n_psi = Z.rows();
  const Eigen::Index n_u = U.rows();
  const Eigen::Index n_k = Phi.rows();
  const Eigen::Index dim = n_k * (n_psi + n_u);
  if (M == 0) throw ContractError("fit_coefficients: empty dataset");
  if (Zp.cols() != M || Phi.cols() != M || (n_u > 0 && U.cols() != M))
    throw ContractError("fit_coefficients: column count mismatch");
  if (opts.warn_underdetermined && M < dim)
    std::cerr << "fit_coefficients: " << M << " samples for " << dim
              << " regressor dimensions; solution may be rank-deficient\n";

  const int workers = std::max(1, opts.threads);
  if (workers == 1 || M < 4096) {
    GramAccumulator acc(dim, n_psi);
    acc.accumulate(Z, U, Zp, Phi, 0, M);
    const Mat W = solve_normal_equations(std::move(acc.G), acc.rhs, opts.ridge);
    return unpack_solution(W, n_k, n_psi, n_u);
  }

  // Contiguous per-worker blocks, combined in worker order.
  std::vector<GramAccumulator> parts;
  parts.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) parts.emplace_back(dim, n_psi);
  {
    std::vector<std::thread> pool;
    const Eigen::Index per = (M + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index begin = std::min<Eigen::Index>(w * per, M);
      const Eigen::Index end = std::min<Eigen::Index>(begin + per, M);
      pool.emplace_back([&, w, begin, end] { parts[static_cast<std::size_t>(w)].accumulate(Z, U, Zp, Phi, begin, end); });
    }
    for (auto& t : pool) t.join();
  }
  for (int w = 1; w < workers; ++w) {
    parts[0].G += parts[static_cast<std::size_t>(w)].G;
    parts[0].rhs += parts[static_cast<std::size_t>(w)].rhs;
  }
  const Mat W = solve_normal_equations(std::move(parts[0].G), parts[0].rhs, opts.ridge);
  return unpack_solution(W, n_k, n_psi, n_u);
}

FitResult fit_coefficients(const Dataset& data, const Dictionary& dict, const PceBasis& basis,
                           const FitOptions& opts) {
  data.check_finite();
  const Mat Z = dict.lift_batch(data.X);
  const Mat Zp = dict.lift_batch(data.Xp);
  const Mat Phi = basis.eval_batch(data.Theta);
  return fit_coefficients_lifted(Z, data.U, Zp, Phi, opts);
}

namespace {

double residual_sse(const Mat& Z, const Mat& U, const Mat& Zp, const Mat& Phi,
                    const std::vector<Mat>& A, const std::vector<Mat>& B) {
  Mat R = Zp;
  for (std::size_t k = 0; k < A.size(); ++k) {
    const auto phi_k = Phi.row(static_cast<Eigen::Index>(k)).array();
    R -= ((A[k] * Z).array().rowwise() * phi_k).matrix();
    if (U.rows() > 0) R -= ((B[k] * U).array().rowwise() * phi_k).matrix();
  }
  return R.squaredNorm();
}

}  // namespace

double model_mse(const PpkoModel& model, const Dataset& data) {
  const Mat Z = model.dict.lift_batch(data.X);
  const Mat Zp = model.dict.lift_batch(data.Xp);
  const Mat Phi = model.basis.eval_batch(data.Theta);
  return residual_sse(Z, data.U, Zp, Phi, model.A_coeffs, model.B_coeffs) /
         static_cast<double>(data.size());
}

PpkoModel train_edmd_dl(const Dataset& data, Dictionary dict, const PceBasis& basis,
                        const TrainConfig& cfg, TrainLog* log) {
  if (cfg.epochs_max < 1) throw ContractError("train_edmd_dl: epochs_max must be >= 1");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0))
    throw ContractError("train_edmd_dl: validation fraction must lie in (0, 1)");
  data.check_finite();
  if (data.n_x != dict.n_x()) throw ContractError("train_edmd_dl: state dimension mismatch");
  if (data.d != basis.dim()) throw ContractError("train_edmd_dl: parameter dimension mismatch");

  // Split by whole trajectories so correlated snapshots never straddle the split.
  const int n_traj = data.trajectory_count();
  if (n_traj < 2) throw ContractError("train_edmd_dl: need at least two trajectories to split");
  std::vector<int> traj_order(static_cast<std::size_t>(n_traj));
  std::iota(traj_order.begin(), traj_order.end(), 0);
  std::mt19937_64 split_rng(derive_seed(cfg.seed, "val-split"));
  std::shuffle(traj_order.begin(), traj_order.end(), split_rng);
  const int n_val_traj = std::clamp(
      static_cast<int>(std::lround(cfg.val_fraction * n_traj)), 1, n_traj - 1);
  std::vector<char> is_val(static_cast<std::size_t>(n_traj), 0);
  for (int i = 0; i < n_val_traj; ++i) is_val[static_cast<std::size_t>(traj_order[static_cast<std::size_t>(i)])] = 1;

  std::vector<Eigen::Index> train_cols, val_cols;
  for (Eigen::Index j = 0; j < data.size(); ++j)
    (is_val[static_cast<std::size_t>(data.traj[j])] ? val_cols : train_cols).push_back(j);
  const Dataset train = data.select(train_cols);
  const Dataset val = data.select(val_cols);
  const auto M = static_cast<double>(train.size());

  const Mat Phi_train = basis.eval_batch(train.Theta);
  const Mat Phi_val = basis.eval_batch(val.Theta);

  FitOptions fit_opts;
  fit_opts.ridge = cfg.ridge;
  fit_opts.threads = cfg.threads;

  TrainLog local_log;
  TrainLog& tl = log ? *log : local_log;
  tl = TrainLog{};
  tl.n_train_snapshots = static_cast<int>(train.size());
  tl.n_val_snapshots = static_cast<int>(val.size());

  auto eval_mse = [&](const Dataset& ds, const Mat& Phi, const FitResult& fit) {
    const Mat Z = dict.lift_batch(ds.X);
    const Mat Zp = dict.lift_batch(ds.Xp);
    return residual_sse(Z, ds.U, Zp, Phi, fit.A, fit.B) / static_cast<double>(ds.size());
  };

  // Contiguous per-trajectory segments of the validation set, for the
  // multi-step selection metric.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> val_segments;  // [begin, end)
  for (Eigen::Index j = 0; j < val.size();) {
    Eigen::Index end = j + 1;
    while (end < val.size() && val.traj[end] == val.traj[j]) ++end;
    val_segments.emplace_back(j, end);
    j = end;
  }

  auto eval_rollout_mse = [&](const FitResult& fit) {
    const int n_x = val.n_x;
    double sum = 0.0;
    long count = 0;
    for (const auto& [begin, end] : val_segments) {
      const Eigen::Index len =
          std::min<Eigen::Index>(cfg.rollout_horizon, end - begin);
      const Vec phi = Phi_val.col(begin);
      Mat A = Mat::Zero(dict.n_psi(), dict.n_psi());
      Mat B = Mat::Zero(dict.n_psi(), val.n_u);
      for (std::size_t k = 0; k < fit.A.size(); ++k) {
        A += phi[static_cast<Eigen::Index>(k)] * fit.A[k];
        if (val.n_u > 0) B += phi[static_cast<Eigen::Index>(k)] * fit.B[k];
      }
      Vec z = dict.lift(val.X.col(begin));
      for (Eigen::Index t = 0; t < len; ++t) {
        z = A * z;
        if (val.n_u > 0) z += B * val.U.col(begin + t);
        sum += (z.segment(1, n_x) - val.Xp.col(begin + t)).squaredNorm();
        ++count;
      }
    }
    const double mse = sum / static_cast<double>(std::max<long>(count, 1));
    return std::isfinite(mse) ? mse : std::numeric_limits<double>::max();
  };

  FitResult fit = fit_coefficients_lifted(dict.lift_batch(train.X), train.U,
                                          dict.lift_batch(train.Xp), Phi_train, fit_opts);

  if (dict.param_count() == 0) {
    // Nothing trainable: one closed-form solve is the whole procedure.
    const double train_mse =
        residual_sse(dict.lift_batch(train.X), train.U, dict.lift_batch(train.Xp), Phi_train,
                     fit.A, fit.B) / M;
    const double val_mse = eval_mse(val, Phi_val, fit);
    tl.epochs.push_back({0, train_mse, train_mse, train_mse, val_mse, 0.0, 0.0, val_mse});
    tl.best_epoch = 0;
    tl.best_val_mse = val_mse;
    PpkoModel model{basis, std::move(dict), std::move(fit.A), std::move(fit.B),
                    PpkoModel::output_matrix(data.n_x, 1 + data.n_x)};
    model.check_consistent();
    return model;
  }

  const bool by_rollout = cfg.selection == SelectionMetric::Rollout;
  auto selection_value = [&](double one_step) {
    return by_rollout ? eval_rollout_mse(fit) : one_step;
  };

  const bool screened = cfg.stability_nodes.cols() > 0 && std::isfinite(cfg.stability_cap);
  Mat screen_phi;  // basis values per screen node, evaluated once
  if (screened) {
    if (cfg.stability_nodes.rows() != basis.dim())
      throw ContractError("train_edmd_dl: stability node dimension mismatch");
    screen_phi = basis.eval_batch(cfg.stability_nodes);
  }
  auto rho_max_of = [&](const FitResult& f) {
    if (!screened) return 0.0;
    double worst = 0.0;
    for (Eigen::Index qn = 0; qn < screen_phi.cols(); ++qn) {
      Mat A = Mat::Zero(dict.n_psi(), dict.n_psi());
      for (std::size_t k = 0; k < f.A.size(); ++k)
        A += screen_phi(static_cast<Eigen::Index>(k), qn) * f.A[k];
      worst = std::max(worst, A.eigenvalues().cwiseAbs().maxCoeff());
    }
    return worst;
  };

  // Two candidate snapshots: the plain best-by-metric (drives early stopping
  // and is the fallback) and the best among epochs passing the stability cap.
  struct Snapshot {
    double metric = std::numeric_limits<double>::max();
    Vec params;
    FitResult fit;
    int epoch = -1;
  };
  Snapshot best_any, best_screened;
  auto offer = [&](Snapshot& slot, double metric, int epoch) {
    if (metric < slot.metric) {
      slot.metric = metric;
      slot.params = dict.params();
      slot.fit = fit;
      slot.epoch = epoch;
      return true;
    }
    return false;
  };

  {
    const double metric0 = selection_value(eval_mse(val, Phi_val, fit));
    offer(best_any, metric0, 0);
    if (rho_max_of(fit) <= cfg.stability_cap) offer(best_screened, metric0, 0);
  }
  tl.best_epoch = 0;
  tl.best_val_mse = best_any.metric;

  Adam adam(dict.param_count(), cfg.adam);
  std::mt19937_64 batch_rng(derive_seed(cfg.seed, "batches"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);

  int stale = 0;
  for (int epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng);

    // (a) Minibatch dictionary updates with frozen coefficients.
    const Eigen::Index batch = std::max(1, cfg.batch_size);
    for (Eigen::Index at = 0; at < train.size(); at += batch) {
      const Eigen::Index m = std::min<Eigen::Index>(batch, train.size() - at);
      Mat Xb(train.n_x, m), Ub(train.n_u, m), Xpb(train.n_x, m),
          Phib(Phi_train.rows(), m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index j = order[static_cast<std::size_t>(at + i)];
        Xb.col(i) = train.X.col(j);
        if (train.n_u > 0) Ub.col(i) = train.U.col(j);
        Xpb.col(i) = train.Xp.col(j);
        Phib.col(i) = Phi_train.col(j);
      }
      Vec grad;
      const double loss =
          edmd_loss_and_grad(dict, EdmdBatch{Xb, Ub, Xpb, Phib, fit.A, fit.B}, grad);
      if (!std::isfinite(loss)) {
        std::ostringstream oss;
        oss << "train_edmd_dl: non-finite loss at epoch " << epoch << ", batch offset " << at
            << "; recent epochs:";
        const std::size_t n = tl.epochs.size();
        for (std::size_t i = n >= 5 ? n - 5 : 0; i < n; ++i)
          oss << " [" << tl.epochs[i].epoch << "] " << tl.epochs[i].train_mse;
        throw NumericError(oss.str());
      }
      update_step(dict, grad, adam);
    }

    // (b) Closed-form coefficient refit over the full training set. The solve
    // cannot increase the regularized objective evaluated with the same dict.
    const Mat Z = dict.lift_batch(train.X);
    const Mat Zp = dict.lift_batch(train.Xp);
    const double obj_pre =
        (residual_sse(Z, train.U, Zp, Phi_train, fit.A, fit.B) + cfg.ridge * stacked_sq_norm(fit)) / M;
    fit = fit_coefficients_lifted(Z, train.U, Zp, Phi_train, fit_opts);
    const double sse_post = residual_sse(Z, train.U, Zp, Phi_train, fit.A, fit.B);
    const double obj_post = (sse_post + cfg.ridge * stacked_sq_norm(fit)) / M;

    // (c) Validation and best-snapshot bookkeeping.
    const double val_mse = eval_mse(val, Phi_val, fit);
    if (!std::isfinite(val_mse) || !std::isfinite(obj_post))
      throw NumericError("train_edmd_dl: non-finite objective at epoch " + std::to_string(epoch));
    const double metric = selection_value(val_mse);
    const double rho = rho_max_of(fit);

    if (offer(best_any, metric, epoch)) {
      stale = 0;
    } else {
      ++stale;
    }
    if (rho <= cfg.stability_cap) offer(best_screened, metric, epoch);

    tl.best_val_mse = best_any.metric;
    tl.epochs.push_back({epoch, sse_post / M, obj_pre, obj_post, val_mse,
                         by_rollout ? metric : 0.0, rho, best_any.metric});
    if (cfg.verbose)
      std::cerr << "epoch " << epoch << " train " << sse_post / M << " val " << val_mse
                << (by_rollout ? " rollout " + std::to_string(metric) : std::string())
                << (screened ? " rho " + std::to_string(rho) : std::string()) << " best "
                << best_any.metric << "\n";
    if (stale >= cfg.patience) break;
  }

  const Snapshot& chosen = best_screened.epoch >= 0 ? best_screened : best_any;
  if (screened && best_screened.epoch < 0)
    std::cerr << "train_edmd_dl: no epoch passed the stability cap " << cfg.stability_cap
              << "; returning the unscreened best\n";
  tl.best_epoch = chosen.epoch;
  tl.best_val_mse = chosen.metric;
  dict.set_params(chosen.params);
  const int n_psi = dict.n_psi();
  PpkoModel model{basis, std::move(dict), chosen.fit.A, chosen.fit.B,
                  PpkoModel::output_matrix(data.n_x, n_psi)};
  model.check_consistent();
  return model;
}

}  // namespace ppko

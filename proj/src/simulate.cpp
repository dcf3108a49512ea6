#include "ppko/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace ppko {

namespace {

template <class... Ts>
struct Overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;

using Clock = std::chrono::steady_clock;

}  // namespace

int plant_n_x(const PlantVariant& plant) {
  return std::visit([](const auto& p) { return p.n_x; }, plant);
}
int plant_n_u(const PlantVariant& plant) {
  return std::visit([](const auto& p) { return p.n_u; }, plant);
}
int plant_n_theta(const PlantVariant& plant) {
  return std::visit([](const auto& p) { return p.n_theta; }, plant);
}
double plant_control_dt(const PlantVariant& plant) {
  return std::visit(Overload{[](const DuffingPlant& p) { return p.dt; },
                             [](const CstrPlant& p) { return p.dt_control; }},
                    plant);
}
std::vector<PolyFamily> plant_families(const PlantVariant& plant) {
  return std::visit([](const auto& p) { return p.families(); }, plant);
}
Vec plant_theta_mean(const PlantVariant& plant) {
  return std::visit([](const auto& p) { return p.theta_mean(); }, plant);
}
Mat plant_sample_params(const PlantVariant& plant, std::mt19937_64& rng, int count) {
  return std::visit([&](const auto& p) { return sample_params(p, rng, count); }, plant);
}
bool plant_uses_deviation_coords(const PlantVariant& plant) {
  return std::holds_alternative<CstrPlant>(plant);
}

void DataGenSpec::validate() const {
  if (n_param_sets < 1 || n_ics_per_set < 1 || n_steps < 1)
    throw ContractError("DataGenSpec: all counts must be >= 1");
  if (ic_lo.size() != ic_hi.size()) throw ContractError("DataGenSpec: ic box size mismatch");
  for (Eigen::Index i = 0; i < ic_lo.size(); ++i)
    if (!(ic_lo[i] <= ic_hi[i])) throw ContractError("DataGenSpec: requires ic_lo <= ic_hi");
  if (!(input_scale >= 0.0)) throw ContractError("DataGenSpec: input_scale must be >= 0");
}

namespace {

// Per-trajectory stepping in model coordinates. For the CSTR this converts to
// physical concentrations around the trajectory's own steady state.
struct ModelFrame {
  const PlantVariant& plant;
  Vec anchor_x;  // physical = model + anchor
  double anchor_u = 0.0;

  static ModelFrame for_theta(const PlantVariant& plant, const Vec& theta) {
    ModelFrame frame{plant, Vec(), 0.0};
    std::visit(Overload{[&](const DuffingPlant& p) { frame.anchor_x = Vec::Zero(p.n_x); },
                        [&](const CstrPlant& p) {
                          const SteadyState ss = cstr_steady_state(p, theta, p.constants.q1_ss);
                          frame.anchor_x = ss.c;
                          frame.anchor_u = p.constants.q1_ss;
                        }},
               plant);
    return frame;
  }

  Vec step(const Vec& x_model, const Vec& u_model, const Vec& theta,
           double cB_in_override = -1.0) const {
    const Vec x_phys = x_model + anchor_x;
    Vec u_phys = u_model;
    if (u_phys.size() > 0) u_phys.array() += anchor_u;
    const Vec next = std::visit(
        Overload{[&](const DuffingPlant& p) { return p.step(x_phys, u_phys, theta); },
                 [&](const CstrPlant& p) { return p.step(x_phys, u_phys, theta, cB_in_override); }},
        plant);
    return next - anchor_x;
  }
};

}  // namespace

namespace {

ModelFrame control_frame_of(const PlantVariant& plant, const Vec* deviation_anchor) {
  ModelFrame frame = ModelFrame::for_theta(plant, plant_theta_mean(plant));
  if (deviation_anchor) {
    if (deviation_anchor->size() != frame.anchor_x.size())
      throw ContractError("closed_loop: deviation anchor size mismatch");
    frame.anchor_x = *deviation_anchor;
  }
  return frame;
}

}  // namespace

Vec control_lift(const PlantVariant& plant, const PpkoModel& model, const Vec& x_phys,
                 const Vec* deviation_anchor) {
  const ModelFrame frame = control_frame_of(plant, deviation_anchor);
  return model.dict.lift(x_phys - frame.anchor_x);
}

Mat simulate_truth(const PlantVariant& plant, const Vec& x0, const Mat& U, const Vec& theta) {
  const ModelFrame frame = ModelFrame::for_theta(plant, theta);
  const Eigen::Index H = U.cols();
  Mat X(x0.size(), H);
  Vec x = x0;
  for (Eigen::Index t = 0; t < H; ++t) {
    x = frame.step(x, U.col(t), theta);
    X.col(t) = x;
  }
  return X;
}

Dataset gen_training_data(const PlantVariant& plant, const DataGenSpec& spec,
                          int* dropped_trajectories) {
  spec.validate();
  const int n_x = plant_n_x(plant);
  const int n_u = plant_n_u(plant);
  const int d = plant_n_theta(plant);
  if (spec.ic_lo.size() != n_x) throw ContractError("gen_training_data: ic box size != n_x");

  std::mt19937_64 rng(derive_seed(spec.seed, "gen-data"));
  const Mat theta_sets = plant_sample_params(plant, rng, spec.n_param_sets);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Eigen::Index max_count =
      static_cast<Eigen::Index>(spec.n_param_sets) * spec.n_ics_per_set * spec.n_steps;
  Dataset data;
  data.resize(n_x, n_u, d, max_count);

  Eigen::Index at = 0;
  int traj_id = 0;
  int dropped = 0;
  const int total_traj = spec.n_param_sets * spec.n_ics_per_set;

  for (int s = 0; s < spec.n_param_sets; ++s) {
    const Vec theta = theta_sets.col(s);
    const ModelFrame frame = ModelFrame::for_theta(plant, theta);
    for (int ic = 0; ic < spec.n_ics_per_set; ++ic) {
      Vec x(n_x);
      for (int i = 0; i < n_x; ++i)
        x[i] = spec.ic_lo[i] + (spec.ic_hi[i] - spec.ic_lo[i]) * unit(rng);
      if (plant_uses_deviation_coords(plant)) {
        // Keep physical concentrations nonnegative at the start.
        x = (x + frame.anchor_x).cwiseMax(0.0) - frame.anchor_x;
      }

      const Eigen::Index start = at;
      bool ok = true;
      for (int t = 0; t < spec.n_steps; ++t) {
        Vec u(n_u);
        for (int i = 0; i < n_u; ++i)
          u[i] = std::clamp(spec.input_scale * gauss(rng), spec.u_clip_lo, spec.u_clip_hi);
        Vec x_next;
        try {
          x_next = frame.step(x, u, theta);
          if (x_next.lpNorm<Eigen::Infinity>() > 1e6)
            throw NumericError("trajectory left the admissible range");
        } catch (const NumericError&) {
          ok = false;
          break;
        }
        data.X.col(at) = x;
        if (n_u > 0) data.U.col(at) = u;
        data.Xp.col(at) = x_next;
        data.Theta.col(at) = theta;
        data.traj[at] = traj_id;
        ++at;
        x = x_next;
      }
      if (!ok) {
        at = start;  // discard the partial trajectory
        ++dropped;
      } else {
        ++traj_id;
      }
    }
  }

  if (dropped_trajectories) *dropped_trajectories = dropped;
  if (dropped > 0 && static_cast<double>(dropped) / total_traj >= 0.01)
    throw NumericError("gen_training_data: " + std::to_string(dropped) + " of " +
                       std::to_string(total_traj) + " trajectories diverged (>= 1%)");

  data.X.conservativeResize(Eigen::NoChange, at);
  data.U.conservativeResize(Eigen::NoChange, at);
  data.Xp.conservativeResize(Eigen::NoChange, at);
  data.Theta.conservativeResize(Eigen::NoChange, at);
  data.traj.conservativeResize(at);
  return data;
}

EnvelopeSeries mc_propagate(const PlantVariant& plant, const Vec& x0, const Mat& U, int n_mc,
                            int horizon, std::uint64_t seed, int threads) {
  if (n_mc < 2) throw ContractError("mc_propagate: requires n_mc >= 2");
  if (horizon < 0) throw ContractError("mc_propagate: requires horizon >= 0");
  const int n_x = plant_n_x(plant);
  const int n_u = plant_n_u(plant);
  if (x0.size() != n_x) throw ContractError("mc_propagate: x0 size mismatch");
  if (U.cols() > 0 && U.cols() < horizon)
    throw ContractError("mc_propagate: input sequence shorter than horizon");

  std::mt19937_64 rng(derive_seed(seed, "mc"));
  Mat thetas = plant_sample_params(plant, rng, n_mc);

  // Canonical sample order: sort draws lexicographically so the reduction is
  // invariant under any reordering of the sample set.
  std::vector<int> order(static_cast<std::size_t>(n_mc));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
      if (thetas(i, a) != thetas(i, b)) return thetas(i, a) < thetas(i, b);
    }
    return false;
  });
  Mat sorted(thetas.rows(), n_mc);
  for (int j = 0; j < n_mc; ++j) sorted.col(j) = thetas.col(order[static_cast<std::size_t>(j)]);

  const Mat U_eff = U.cols() > 0 ? U : Mat::Zero(n_u, horizon);

  // Per-block Welford accumulators combined pairwise in block order: stable
  // against cancellation (degenerate ensembles give sigma exactly 0) and
  // independent of the thread count.
  struct Moments {
    long n = 0;
    Mat mean;
    Mat m2;
  };
  constexpr int kBlock = 1024;
  const int n_blocks = (n_mc + kBlock - 1) / kBlock;
  std::vector<Moments> blocks(static_cast<std::size_t>(n_blocks));

  auto run_block = [&](int b) {
    const int begin = b * kBlock;
    const int end = std::min(n_mc, begin + kBlock);
    Moments mom;
    mom.mean = Mat::Zero(n_x, horizon + 1);
    mom.m2 = Mat::Zero(n_x, horizon + 1);
    Mat traj(n_x, horizon + 1);
    for (int j = begin; j < end; ++j) {
      const Vec theta = sorted.col(j);
      const ModelFrame frame = ModelFrame::for_theta(plant, theta);
      Vec x = x0;
      traj.col(0) = x;
      for (int t = 0; t < horizon; ++t) {
        x = frame.step(x, U_eff.col(t), theta);
        traj.col(t + 1) = x;
      }
      ++mom.n;
      const Mat delta = traj - mom.mean;
      mom.mean += delta / static_cast<double>(mom.n);
      mom.m2 += delta.cwiseProduct(traj - mom.mean);
    }
    blocks[static_cast<std::size_t>(b)] = std::move(mom);
  };

  if (threads <= 1) {
    for (int b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < std::min(threads, n_blocks); ++w)
      pool.emplace_back([&] {
        for (int b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1)) run_block(b);
      });
    for (auto& t : pool) t.join();
  }

  Moments total = std::move(blocks[0]);
  for (int b = 1; b < n_blocks; ++b) {
    const Moments& add = blocks[static_cast<std::size_t>(b)];
    const long n_ab = total.n + add.n;
    const Mat delta = add.mean - total.mean;
    total.m2 += add.m2 + delta.cwiseProduct(delta) *
                             (static_cast<double>(total.n) * static_cast<double>(add.n) /
                              static_cast<double>(n_ab));
    total.mean += delta * (static_cast<double>(add.n) / static_cast<double>(n_ab));
    total.n = n_ab;
  }

  EnvelopeSeries env;
  env.source = "mc";
  env.dt = plant_control_dt(plant);
  env.mean = total.mean;
  env.sigma = (total.m2 / static_cast<double>(n_mc - 1)).cwiseMax(0.0).cwiseSqrt();
  return env;
}

EnvelopeSeries ppko_propagate(const PpkoModel& model, const Vec& x0, const Mat& U,
                              const QuadratureRule& quad) {
  const int n_x = model.n_x();
  const Eigen::Index horizon = U.cols();

  // Two passes over the stored node trajectories keep the variance free of
  // the E[x^2] - mean^2 cancellation (a theta-independent model must report
  // sigma 0, not rounding noise).
  std::vector<Mat> trajectories(static_cast<std::size_t>(quad.count()));
  for (Eigen::Index qn = 0; qn < quad.count(); ++qn) {
    Mat traj(n_x, horizon + 1);
    traj.col(0) = x0;
    if (horizon > 0)
      traj.rightCols(horizon) = model.rollout(x0, U, quad.node(qn));
    trajectories[static_cast<std::size_t>(qn)] = std::move(traj);
  }

  Mat mean = Mat::Zero(n_x, horizon + 1);
  for (Eigen::Index qn = 0; qn < quad.count(); ++qn)
    mean += quad.weights[qn] * trajectories[static_cast<std::size_t>(qn)];
  Mat var = Mat::Zero(n_x, horizon + 1);
  for (Eigen::Index qn = 0; qn < quad.count(); ++qn) {
    const Mat dev = trajectories[static_cast<std::size_t>(qn)] - mean;
    var += quad.weights[qn] * dev.cwiseProduct(dev);
  }

  EnvelopeSeries env;
  env.source = "ppko";
  env.dt = 0.0;
  env.mean = std::move(mean);
  env.sigma = var.cwiseMax(0.0).cwiseSqrt();
  // column 0 is the measured initial condition, not an estimate
  env.mean.col(0) = x0;
  env.sigma.col(0).setZero();
  return env;
}

ClosedLoopLog closed_loop(const PlantVariant& plant, const PpkoModel& model, const SmpcSpec& spec,
                          const CondensedProblem& cp, const Vec& theta_true, const Vec& x0,
                          int n_steps, const DisturbanceSchedule& disturbances,
                          const SolverSettings& solver_settings, const Vec* deviation_anchor) {
  const int n_u = plant_n_u(plant);
  if (cp.n_psi != model.n_psi()) throw ContractError("closed_loop: model/problem mismatch");
  if (n_steps < 1) throw ContractError("closed_loop: requires n_steps >= 1");

  // Controller anchor: theta itself is unknown at run time, so the deviation
  // frame is pinned at the supplied reference (a measured operating point)
  // or at the mean-parameter steady state.
  const ModelFrame control_frame = control_frame_of(plant, deviation_anchor);

  ClosedLoopLog log;
  log.theta_true = theta_true;
  log.dt = plant_control_dt(plant);
  log.steps.reserve(static_cast<std::size_t>(n_steps));

  Vec x_phys = x0;
  Vec warm_U;
  Vec warm_y;
  bool have_warm = false;

  auto disturbance_at = [&](int step) {
    double delta = 0.0;
    for (const auto& ev : disturbances)
      if (ev.step <= step) delta = ev.delta;
    return delta;
  };

  const Eigen::Index nU = cp.decision_dim();
  for (int t = 0; t < n_steps; ++t) {
    ClosedLoopStep rec;
    rec.x = x_phys;

    const Vec x_model = x_phys - control_frame.anchor_x;
    const Vec z0 = model.dict.lift(x_model);
    const ProgramInstance inst = instantiate(cp, z0);

    WarmStart ws;
    if (have_warm) {
      ws.v = warm_U;
      ws.y = warm_y;
      rec.warm_start = warm_U;
    }

    const auto t0 = Clock::now();
    const Solution sol = solve(inst, have_warm ? &ws : nullptr, solver_settings);
    rec.solve_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
    rec.status = sol.status;
    rec.iterations = sol.iterations;
    rec.objective = sol.objective;

    Vec U_used;
    if (sol.status == SolveStatus::Infeasible) {
      ++log.infeasible_count;
      rec.fallback = true;
      U_used = have_warm ? warm_U : Vec(Vec::Zero(nU));
    } else {
      U_used = sol.v;
      warm_y = sol.dual;
    }
    rec.U_solution = U_used;

    // Applied input, clamped to the bounds as a safety net and hard-checked.
    Vec u0 = U_used.head(n_u);
    for (int i = 0; i < n_u; ++i) {
      if (std::isfinite(spec.u_min[i])) u0[i] = std::max(u0[i], spec.u_min[i]);
      if (std::isfinite(spec.u_max[i])) u0[i] = std::min(u0[i], spec.u_max[i]);
      if ((std::isfinite(spec.u_min[i]) && u0[i] < spec.u_min[i]) ||
          (std::isfinite(spec.u_max[i]) && u0[i] > spec.u_max[i]))
        throw NumericError("closed_loop: applied input escaped its bounds");
    }
    rec.u = u0;

    // Advance the truth plant one control interval in physical coordinates.
    Vec u_phys = u0;
    if (u_phys.size() > 0) u_phys.array() += control_frame.anchor_u;
    x_phys = std::visit(
        Overload{[&](const DuffingPlant& p) { return p.step(x_phys, u_phys, theta_true); },
                 [&](const CstrPlant& p) {
                   return p.step(x_phys, u_phys, theta_true,
                                 p.constants.cB_in + disturbance_at(t));
                 }},
        plant);

    // Shift the warm start by one block, duplicating the last block.
    warm_U.resize(nU);
    warm_U.head(nU - n_u) = U_used.tail(nU - n_u);
    warm_U.tail(n_u) = U_used.tail(n_u);
    have_warm = true;

    log.steps.push_back(std::move(rec));
  }
  return log;
}

}  // namespace ppko

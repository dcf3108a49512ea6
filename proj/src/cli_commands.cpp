#include "ppko/cli_commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>

#include "ppko/io.hpp"

namespace ppko {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path dataset_path(const RunConfig& cfg, const CliOptions& opt) {
  return opt.dataset_path.value_or(cfg.out_dir / "dataset.bin");
}

fs::path model_path(const RunConfig& cfg, const CliOptions& opt) {
  return opt.model_path.value_or(cfg.out_dir / "model.ppko");
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(p * (static_cast<double>(v.size()) - 1.0));
  return v[idx];
}

}  // namespace

RunConfig load_config_with_overrides(const CliOptions& opt) {
  RunConfig cfg = RunConfig::from_file(opt.config_path);
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.training.seed = *opt.seed;
    cfg.data.seed = *opt.seed;
  }
  if (opt.threads) {
    cfg.threads = *opt.threads;
    cfg.training.threads = *opt.threads;
  }
  if (opt.out_dir) cfg.out_dir = *opt.out_dir;
  if (opt.quad_nodes) cfg.quad_nodes_per_dim = *opt.quad_nodes;
  if (opt.horizon) {
    const int n_x = cfg.plant_name == "duffing" ? DuffingPlant::n_x : CstrPlant::n_x;
    if (cfg.smpc.x_min.size() > 0) cfg.smpc.x_min = cfg.smpc.x_min.col(0).replicate(1, *opt.horizon);
    if (cfg.smpc.x_max.size() > 0) cfg.smpc.x_max = cfg.smpc.x_max.col(0).replicate(1, *opt.horizon);
    cfg.smpc.horizon = *opt.horizon;
    const int n_u = cfg.plant_name == "duffing" ? DuffingPlant::n_u : CstrPlant::n_u;
    cfg.smpc.validate(n_x, n_u);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const CliOptions& opt) {
  RunConfig cfg;
  try {
    cfg = load_config_with_overrides(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    const PlantVariant plant = cfg.plant();
    int dropped = 0;
    const Dataset data = gen_training_data(plant, cfg.data, &dropped);

    Json manifest;
    manifest["plant"] = cfg.plant_name;
    manifest["plant_hash"] = hash_hex(cfg.plant_hash());
    manifest["seed"] = cfg.seed;
    manifest["n_param_sets"] = cfg.data.n_param_sets;
    manifest["n_ics_per_set"] = cfg.data.n_ics_per_set;
    manifest["n_steps"] = cfg.data.n_steps;
    manifest["dropped_trajectories"] = dropped;

    const fs::path bin = dataset_path(cfg, opt);
    const std::string bytes = serialize_dataset(data, manifest);
    atomic_write(bin, bytes);
    manifest["count"] = data.size();
    manifest["file"] = bin.filename().string();
    manifest["file_hash"] = hash_hex(fnv1a64(bytes));
    write_json(cfg.out_dir / "dataset.json", manifest);

    for (int k = 0; k < cfg.dump_trajectories; ++k) {
      // Reassemble trajectory k from its snapshot columns.
      std::vector<Eigen::Index> cols;
      for (Eigen::Index j = 0; j < data.size(); ++j)
        if (data.traj[j] == k) cols.push_back(j);
      if (cols.empty()) break;
      Mat X(data.n_x, static_cast<Eigen::Index>(cols.size()));
      Mat U(data.n_u, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t i = 0; i < cols.size(); ++i) {
        X.col(static_cast<Eigen::Index>(i)) = data.Xp.col(cols[i]);
        U.col(static_cast<Eigen::Index>(i)) = data.U.col(cols[i]);
      }
      atomic_write(cfg.out_dir / ("trajectory_" + std::to_string(k) + ".csv"),
                   trajectory_csv(plant_control_dt(plant), data.X.col(cols.front()), X, U,
                                  data.Theta.col(cols.front())));
    }

    std::cout << "gen-data: " << data.size() << " snapshots (" << dropped
              << " trajectories dropped) -> " << bin.string() << "\n";
    return kOk;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const CliOptions& opt) {
  RunConfig cfg;
  try {
    cfg = load_config_with_overrides(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    Json manifest;
    const Dataset data = load_dataset(dataset_path(cfg, opt), &manifest);
    if (manifest.value("plant_hash", "") != hash_hex(cfg.plant_hash())) {
      std::cerr << "train: dataset manifest plant hash does not match the config\n";
      return kMismatchError;
    }

    TrainConfig tc = cfg.training;
    const PceBasis basis = cfg.basis();
    Mat screen_nodes;
    if (std::isfinite(cfg.stability_cap)) {
      tc.stability_cap = cfg.stability_cap;
      tc.stability_nodes = basis.gauss_rule(cfg.quad_nodes_per_dim).nodes;
      screen_nodes = tc.stability_nodes;
    }

    // Retrain from fresh dictionary initializations until the selected model
    // passes the spectral cap on the deployment quadrature grid; keep the
    // least unstable model otherwise. Long-horizon stability at the grid
    // corners depends on the draw, and held-out data cannot observe it.
    const int n_x = cfg.plant_name == "duffing" ? DuffingPlant::n_x : CstrPlant::n_x;
    auto rho_on_grid = [&](const PpkoModel& m) {
      if (screen_nodes.cols() == 0) return 0.0;
      double worst = 0.0;
      for (Eigen::Index qn = 0; qn < screen_nodes.cols(); ++qn)
        worst = std::max(worst,
                         m.A_at(screen_nodes.col(qn)).eigenvalues().cwiseAbs().maxCoeff());
      return worst;
    };

    TrainLog log;
    std::optional<PpkoModel> best_model;
    double best_rho = std::numeric_limits<double>::infinity();
    int restarts_used = 0;
    const int max_restarts = std::max(1, cfg.training_restarts);
    for (int r = 0; r < max_restarts; ++r) {
      Dictionary dict(n_x, cfg.n_learn, cfg.hidden,
                      derive_seed(cfg.seed + 1000003ULL * static_cast<std::uint64_t>(r),
                                  "dict-init"));
      TrainLog rlog;
      PpkoModel candidate = train_edmd_dl(data, std::move(dict), basis, tc, &rlog);
      const double rho = rho_on_grid(candidate);
      ++restarts_used;
      if (rho < best_rho || !best_model) {
        best_rho = rho;
        best_model = std::move(candidate);
        log = std::move(rlog);
      }
      if (best_rho <= cfg.stability_cap) break;
      if (r + 1 < max_restarts)
        std::cerr << "train: restart " << (r + 1) << " (spectral radius " << rho
                  << " above cap " << cfg.stability_cap << ")\n";
    }
    const PpkoModel& model = *best_model;

    ModelMetadata meta;
    meta.seed = cfg.seed;
    meta.ridge = cfg.training.ridge;
    meta.best_epoch = log.best_epoch;
    meta.final_train_mse = log.epochs.empty() ? 0.0 : log.epochs.back().train_mse;
    meta.final_val_mse = log.best_val_mse;
    meta.plant_hash = cfg.plant_hash();

    const fs::path mp = model_path(cfg, opt);
    save_model(mp, model, meta);
    atomic_write(cfg.out_dir / "training_log.csv", training_log_csv(log));

    Json summary;
    summary["epochs_run"] = log.epochs.size();
    summary["best_epoch"] = log.best_epoch;
    summary["best_val_mse"] = log.best_val_mse;
    summary["n_train_snapshots"] = log.n_train_snapshots;
    summary["n_val_snapshots"] = log.n_val_snapshots;
    summary["n_psi"] = model.n_psi();
    summary["n_terms"] = model.n_terms();
    summary["restarts_used"] = restarts_used;
    summary["rho_on_grid"] = best_rho;
    summary["model_file"] = mp.filename().string();
    summary["model_hash"] = hash_hex(hash_file(mp));
    write_json(cfg.out_dir / "train_summary.json", summary);

    std::cout << "train: " << log.epochs.size() << " epochs, best val mse " << log.best_val_mse
              << " (epoch " << log.best_epoch << ") -> " << mp.string() << "\n";
    return kOk;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kMismatchError;
  }
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const CliOptions& opt) {
  RunConfig cfg;
  try {
    cfg = load_config_with_overrides(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    ModelMetadata meta;
    const PpkoModel model = load_model(model_path(cfg, opt), &meta);
    if (meta.plant_hash != cfg.plant_hash()) {
      std::cerr << "validate: model plant hash does not match the config\n";
      return kMismatchError;
    }

    const PlantVariant plant = cfg.plant();
    const int horizon = cfg.validate_horizon;
    const Mat U = Mat::Zero(plant_n_u(plant), horizon);

    EnvelopeSeries mc = mc_propagate(plant, cfg.validate_x0, U, cfg.validate_n_mc, horizon,
                                     derive_seed(cfg.seed, "validate-mc"), cfg.threads);
    const QuadratureRule quad = model.basis.gauss_rule(cfg.quad_nodes_per_dim);
    EnvelopeSeries pk = ppko_propagate(model, cfg.validate_x0, U, quad);
    pk.dt = mc.dt;

    const Mat mean_gap_t = (mc.mean - pk.mean).cwiseAbs();
    const Mat sigma_gap_t = (mc.sigma - pk.sigma).cwiseAbs();
    const Vec mean_gap = mean_gap_t.rowwise().maxCoeff();
    const Vec sigma_gap = sigma_gap_t.rowwise().maxCoeff();

    atomic_write(cfg.out_dir / "envelope_mc.csv", envelope_csv(mc));
    atomic_write(cfg.out_dir / "envelope_ppko.csv", envelope_csv(pk));

    const bool pass =
        mean_gap.maxCoeff() <= cfg.mean_gap_max && sigma_gap.maxCoeff() <= cfg.sigma_gap_max;
    Json metrics;
    metrics["horizon"] = horizon;
    metrics["n_mc"] = cfg.validate_n_mc;
    metrics["quad_nodes_per_dim"] = cfg.quad_nodes_per_dim;
    metrics["mean_gap"] = std::vector<double>(mean_gap.data(), mean_gap.data() + mean_gap.size());
    metrics["sigma_gap"] =
        std::vector<double>(sigma_gap.data(), sigma_gap.data() + sigma_gap.size());
    metrics["mean_gap_max"] = cfg.mean_gap_max;
    metrics["sigma_gap_max"] = cfg.sigma_gap_max;
    metrics["pass"] = pass;
    write_json(cfg.out_dir / "validate_metrics.json", metrics);

    std::cout << "validate: max mean gap " << mean_gap.maxCoeff() << " (gate " << cfg.mean_gap_max
              << "), max sigma gap " << sigma_gap.maxCoeff() << " (gate " << cfg.sigma_gap_max
              << ") -> " << (pass ? "pass" : "FAIL") << "\n";
    return pass ? kOk : kValidationGate;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kMismatchError;
  }
}

// ---------------------------------------------------------------------------
// smpc
// ---------------------------------------------------------------------------

namespace {

Json log_summary(const ClosedLoopLog& log) {
  std::vector<double> times;
  times.reserve(log.steps.size());
  int max_iters = 0;
  for (const auto& st : log.steps) {
    times.push_back(st.solve_time_s);
    max_iters = std::max(max_iters, st.iterations);
  }
  Json j;
  j["steps"] = log.steps.size();
  j["final_state_norm"] = log.final_state_norm();
  j["infeasible_steps"] = log.infeasible_count;
  j["solve_time_median_s"] = percentile(times, 0.5);
  j["solve_time_p90_s"] = percentile(times, 0.9);
  j["max_iterations"] = max_iters;
  return j;
}

struct CstrRecovery {
  double worst_ratio = 0.0;  // max over windows of |final| / |peak|
  bool recovered = true;
};

// Deviation of c_C from its pre-window settled value: the end-of-window
// deviation must be a small fraction of the in-window peak. Windows are
// spaced `stride` steps apart (stride - window_steps settle steps between
// them) so each one starts from a settled state.
CstrRecovery cstr_recovery_metric(const std::vector<Vec>& cC_story, int warmup, int n_windows,
                                  int window_steps, int stride, double ratio_max) {
  CstrRecovery out;
  for (int w = 0; w < n_windows; ++w) {
    const int sw = warmup + w * stride;
    const int ew = std::min<int>(sw + window_steps, static_cast<int>(cC_story.size()) - 1);
    const double ref = cC_story[static_cast<std::size_t>(sw)][2];
    double peak = 0.0;
    for (int t = sw + 1; t <= ew; ++t)
      peak = std::max(peak, std::abs(cC_story[static_cast<std::size_t>(t)][2] - ref));
    const double final_dev = std::abs(cC_story[static_cast<std::size_t>(ew)][2] - ref);
    const double ratio = peak > 1e-12 ? final_dev / peak : 0.0;
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    if (ratio > ratio_max) out.recovered = false;
  }
  return out;
}

std::vector<Vec> states_of(const ClosedLoopLog& log) {
  std::vector<Vec> xs;
  xs.reserve(log.steps.size());
  for (const auto& st : log.steps) xs.push_back(st.x);
  return xs;
}

}  // namespace

int cmd_smpc(const CliOptions& opt) {
  RunConfig cfg;
  try {
    cfg = load_config_with_overrides(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    const fs::path mp = model_path(cfg, opt);
    ModelMetadata meta;
    const PpkoModel model = load_model(mp, &meta);
    if (meta.plant_hash != cfg.plant_hash()) {
      std::cerr << "smpc: model plant hash does not match the config\n";
      return kMismatchError;
    }

    const PlantVariant plant = cfg.plant();
    const QuadratureRule quad = model.basis.gauss_rule(cfg.quad_nodes_per_dim);
    bool cache_hit = false;
    const auto t_cond = Clock::now();
    const CondensedProblem cp = condense_cached(model, cfg.smpc, quad, hash_file(mp),
                                                cfg.out_dir / "cache", &cache_hit);
    const double condense_time = elapsed(t_cond);

    Json summary;
    summary["condense_time_s"] = condense_time;
    summary["condense_cache_hit"] = cache_hit;
    summary["decision_dim"] = cp.decision_dim();
    summary["runs"] = Json::array();

    if (cfg.plant_name == "duffing") {
      for (const auto& regime_name : cfg.regimes) {
        const DuffingRegime regime = cfg.regime(regime_name);
        const ClosedLoopLog log =
            closed_loop(plant, model, cfg.smpc, cp, regime.theta, regime.x0, cfg.cl_n_steps);
        atomic_write(cfg.out_dir / ("closed_loop_" + regime_name + ".csv"),
                     closed_loop_csv(log));
        Json j = log_summary(log);
        j["regime"] = regime_name;
        j["theta_true"] =
            std::vector<double>(regime.theta.data(), regime.theta.data() + regime.theta.size());
        summary["runs"].push_back(j);
        std::cout << "smpc[" << regime_name << "]: final |x| = " << log.final_state_norm()
                  << ", infeasible steps " << log.infeasible_count << "\n";
      }
    } else {
      std::mt19937_64 rng(derive_seed(cfg.seed, "cstr-closed-loop"));
      const CstrPlant& cstr = std::get<CstrPlant>(plant);
      const SteadyState anchor = cstr_steady_state(cstr, cstr.theta_mean(), cstr.constants.q1_ss);
      std::uniform_real_distribution<double> mag(cfg.disturbance_min, cfg.disturbance_max);
      std::uniform_int_distribution<int> sign(0, 1);

      const int stride = cfg.cl_window_steps + cfg.cl_settle_steps;
      const int total_steps = cfg.cl_warmup_steps + cfg.cl_n_windows * stride + 1;
      int recovered_count = 0;
      int baseline_violations = 0;

      for (int rlz = 0; rlz < cfg.cl_n_realizations; ++rlz) {
        const Vec theta_true = plant_sample_params(plant, rng, 1).col(0);
        DisturbanceSchedule schedule;
        for (int w = 0; w < cfg.cl_n_windows; ++w) {
          double delta = (sign(rng) == 0 ? 1.0 : -1.0) * mag(rng);
          // keep the disturbed feed concentration physical
          delta = std::max(delta, -cstr.constants.cB_in + 0.05);
          const int at = cfg.cl_warmup_steps + w * stride;
          schedule.push_back({at, delta});
          if (cfg.cl_pulse_steps > 0 && cfg.cl_pulse_steps < cfg.cl_window_steps)
            schedule.push_back({at + cfg.cl_pulse_steps, 0.0});
        }

        // Start at the truth steady state and anchor the controller there:
        // the pre-disturbance operating point is a measurement, and the task
        // is to regulate c_C back to it after each feed step.
        const SteadyState truth_ss =
            cstr_steady_state(cstr, theta_true, cstr.constants.q1_ss);
        const ClosedLoopLog log = closed_loop(plant, model, cfg.smpc, cp, theta_true,
                                              truth_ss.c, total_steps, schedule, {},
                                              &truth_ss.c);

        // Uncontrolled baseline: input pinned at the steady-state flow.
        std::vector<Vec> base_story;
        {
          Vec c = truth_ss.c;
          base_story.push_back(c);
          Vec u_ss(1);
          u_ss << cstr.constants.q1_ss;
          for (int t = 0; t < total_steps; ++t) {
            double delta = 0.0;
            for (const auto& ev : schedule)
              if (ev.step <= t) delta = ev.delta;
            c = cstr.step(c, u_ss, theta_true, cstr.constants.cB_in + delta);
            base_story.push_back(c);
          }
        }

        const CstrRecovery rec =
            cstr_recovery_metric(states_of(log), cfg.cl_warmup_steps, cfg.cl_n_windows,
                                 cfg.cl_window_steps, stride, cfg.recovery_ratio_max);
        const CstrRecovery base_rec =
            cstr_recovery_metric(base_story, cfg.cl_warmup_steps, cfg.cl_n_windows,
                                 cfg.cl_window_steps, stride, cfg.recovery_ratio_max);
        if (rec.recovered) ++recovered_count;
        if (!base_rec.recovered) ++baseline_violations;

        if (rlz < 5)
          atomic_write(cfg.out_dir / ("closed_loop_cstr_r" + std::to_string(rlz) + ".csv"),
                       closed_loop_csv(log));

        Json j = log_summary(log);
        j["realization"] = rlz;
        j["theta_true"] =
            std::vector<double>(theta_true.data(), theta_true.data() + theta_true.size());
        j["recovered"] = rec.recovered;
        j["worst_recovery_ratio"] = rec.worst_ratio;
        j["baseline_violates"] = !base_rec.recovered;
        j["baseline_worst_ratio"] = base_rec.worst_ratio;
        summary["runs"].push_back(j);
      }
      summary["recovered_count"] = recovered_count;
      summary["n_realizations"] = cfg.cl_n_realizations;
      summary["baseline_violation_count"] = baseline_violations;
      summary["anchor_cC_ss"] = anchor.c[2];
      std::cout << "smpc[cstr]: " << recovered_count << "/" << cfg.cl_n_realizations
                << " recovered, baseline violates in " << baseline_violations << "\n";
    }

    write_json(cfg.out_dir / "smpc_summary.json", summary);
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kMismatchError;
  } catch (const std::exception& e) {
    std::cerr << "run aborted: " << e.what() << "\n";
    return kRunAbort;
  }
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const CliOptions& opt) {
  RunConfig cfg;
  try {
    cfg = load_config_with_overrides(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    const fs::path mp = model_path(cfg, opt);
    const PpkoModel base = load_model(mp);
    const PlantVariant plant = cfg.plant();
    const QuadratureRule quad = base.basis.gauss_rule(cfg.quad_nodes_per_dim);

    // One fixed run per sweep point; theta pinned so only n_psi varies.
    const Vec theta_true =
        cfg.plant_name == "duffing" ? cfg.regime("damped_double_well").theta : plant_theta_mean(plant);
    Vec x0;
    if (cfg.plant_name == "duffing") {
      x0 = cfg.regime("damped_double_well").x0;
    } else {
      x0 = cstr_steady_state(std::get<CstrPlant>(plant), theta_true,
                             std::get<CstrPlant>(plant).constants.q1_ss)
               .c;
    }

    std::string csv =
        "n_psi,n_terms,decision_dim,condense_time_s,solve_time_median_s,solve_time_p90_s,"
        "iters_median_warm,iters_median_cold,warm_not_worse_frac\n";
    std::vector<double> medians;

    for (int target : cfg.bench_n_psi) {
      PpkoModel model = base;
      if (target > base.n_psi()) {
        model = pad_observables(base, target);
      } else if (target < base.n_psi()) {
        // quick retrain with a smaller learned dictionary
        const int n_learn = target - 1 - base.n_x();
        if (n_learn < 1)
          throw ContractError("bench: n_psi target " + std::to_string(target) + " too small");
        const Dataset data = load_dataset(dataset_path(cfg, opt));
        Dictionary dict(base.n_x(), n_learn, cfg.hidden, derive_seed(cfg.seed, "bench-dict"));
        TrainConfig tc = cfg.training;
        tc.epochs_max = cfg.bench_retrain_epochs;
        tc.patience = cfg.bench_retrain_epochs;
        model = train_edmd_dl(data, std::move(dict), base.basis, tc);
      }

      const auto t_cond = Clock::now();
      const CondensedProblem cp = condense(model, cfg.smpc, quad);
      const double condense_time = elapsed(t_cond);

      if (cp.decision_dim() != static_cast<Eigen::Index>(cfg.smpc.horizon) *
                                   (cfg.plant_name == "duffing" ? DuffingPlant::n_u : CstrPlant::n_u)) {
        std::cerr << "bench: decision dimension " << cp.decision_dim() << " != H*n_u\n";
        return kBenchAssert;
      }

      const ClosedLoopLog log =
          closed_loop(plant, model, cfg.smpc, cp, theta_true, x0, cfg.bench_n_steps);

      // Cold replay of the same instances for the warm-start comparison.
      std::vector<double> times, warm_iters, cold_iters;
      int warm_not_worse = 0;
      for (const auto& st : log.steps) {
        times.push_back(st.solve_time_s);
        warm_iters.push_back(st.iterations);
        const Vec z0 = control_lift(plant, model, st.x);
        const ProgramInstance inst = instantiate(cp, z0);
        const Solution cold = solve(inst, nullptr);
        cold_iters.push_back(cold.iterations);
        if (st.iterations <= cold.iterations) ++warm_not_worse;
      }
      const double frac =
          log.steps.empty() ? 1.0 : static_cast<double>(warm_not_worse) / log.steps.size();
      if (frac < 0.8)
        std::cout << "bench: warm-start speedup property not met at n_psi " << model.n_psi()
                  << " (" << frac << " of steps; report-only)\n";

      csv += std::to_string(model.n_psi()) + "," + std::to_string(model.n_terms()) + "," +
             std::to_string(cp.decision_dim()) + "," + format_double(condense_time) + "," +
             format_double(percentile(times, 0.5)) + "," + format_double(percentile(times, 0.9)) +
             "," + format_double(percentile(warm_iters, 0.5)) + "," +
             format_double(percentile(cold_iters, 0.5)) + "," + format_double(frac) + "\n";
      medians.push_back(percentile(times, 0.5));
      std::cout << "bench[n_psi=" << model.n_psi() << "]: condense " << condense_time
                << " s, median solve " << percentile(times, 0.5) << " s\n";
    }

    atomic_write(cfg.out_dir / "bench.csv", csv);
    Json j;
    j["n_psi"] = cfg.bench_n_psi;
    j["median_solve_times_s"] = medians;
    if (!medians.empty()) {
      const auto [lo, hi] = std::minmax_element(medians.begin(), medians.end());
      j["median_spread_ratio"] = *hi / std::max(*lo, 1e-300);
    }
    write_json(cfg.out_dir / "bench_summary.json", j);
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kMismatchError;
  } catch (const std::exception& e) {
    std::cerr << "bench failed: " << e.what() << "\n";
    return kBenchAssert;
  }
}

}  // namespace ppko

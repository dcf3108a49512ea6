#pragma once

#include <string>
#include <variant>
#include <vector>

#include "ppko/condense.hpp"
#include "ppko/dataset.hpp"
#include "ppko/model.hpp"
#include "ppko/plants.hpp"

namespace ppko {

using PlantVariant = std::variant<DuffingPlant, CstrPlant>;

int plant_n_x(const PlantVariant& plant);
int plant_n_u(const PlantVariant& plant);
int plant_n_theta(const PlantVariant& plant);
double plant_control_dt(const PlantVariant& plant);
std::vector<PolyFamily> plant_families(const PlantVariant& plant);
Vec plant_theta_mean(const PlantVariant& plant);
Mat plant_sample_params(const PlantVariant& plant, std::mt19937_64& rng, int count);

/// True when the plant is modeled in deviation coordinates relative to a
/// parameter-dependent steady state (the CSTR case).
bool plant_uses_deviation_coords(const PlantVariant& plant);

struct DataGenSpec {
  int n_param_sets = 20;
  int n_ics_per_set = 20;
  int n_steps = 200;
  Vec ic_lo;  // initial-condition box, model coordinates
  Vec ic_hi;
  double input_scale = 1.0;  // inputs are input_scale * N(0,1), zero-order hold
  double u_clip_lo = -std::numeric_limits<double>::infinity();
  double u_clip_hi = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;

  void validate() const;
};

/**
 * @brief Simulates the training protocol: for each parameter draw and each
 * initial condition, n_steps one-interval transitions under i.i.d. random
 * inputs. For the CSTR the snapshots are recorded in deviation coordinates
 * relative to the steady state of that trajectory's own parameter draw.
 *
 * Diverging trajectories are dropped and counted; more than 1% dropped is an
 * error.
 */
Dataset gen_training_data(const PlantVariant& plant, const DataGenSpec& spec,
                          int* dropped_trajectories = nullptr);

/// Per-time first and second moments of a state trajectory ensemble.
/// Column t corresponds to time t * dt; column 0 is the initial condition.
struct EnvelopeSeries {
  Mat mean;   // n_x x (horizon+1)
  Mat sigma;  // n_x x (horizon+1), elementwise nonnegative
  std::string source;  // "mc" or "ppko"
  double dt = 0.0;
};

/**
 * @brief Monte Carlo ground truth: samples parameters, integrates the plant,
 * returns empirical mean and sigma per step. With U empty the input is held
 * at zero (model coordinates). Samples are drawn up front and reduced in a
 * canonical order, so the result is invariant to sample reordering.
 */
EnvelopeSeries mc_propagate(const PlantVariant& plant, const Vec& x0, const Mat& U, int n_mc,
                            int horizon, std::uint64_t seed, int threads = 1);

/// Quadrature propagation through the lifted model: exact (non-statistical)
/// weighted moments of the polynomial-in-theta trajectory.
EnvelopeSeries ppko_propagate(const PpkoModel& model, const Vec& x0, const Mat& U,
                              const QuadratureRule& quad);

/// Additive step on the CSTR feed concentration cB_in: from `step` onward the
/// offset is `delta` (later events replace earlier ones).
struct DisturbanceEvent {
  int step = 0;
  double delta = 0.0;
};
using DisturbanceSchedule = std::vector<DisturbanceEvent>;

struct ClosedLoopStep {
  Vec x;  // measured physical state at the start of the step
  Vec u;  // applied input, model coordinates
  SolveStatus status = SolveStatus::Optimal;
  int iterations = 0;
  double solve_time_s = 0.0;
  double objective = 0.0;
  bool fallback = false;  // solver failed, warm-start shift applied instead
  Vec U_solution;         // full-horizon decision vector
  Vec warm_start;         // warm start used for this step (empty on step 0)
};

struct ClosedLoopLog {
  std::vector<ClosedLoopStep> steps;
  Vec theta_true;
  double dt = 0.0;
  int infeasible_count = 0;

  double final_state_norm() const {
    return steps.empty() ? 0.0 : steps.back().x.norm();
  }
};

/**
 * @brief Receding-horizon SMPC run against the truth plant: measure, lift,
 * instantiate + solve the condensed problem, apply the first input (clamped
 * to the bounds as a safety net), advance the plant, shift the warm start.
 *
 * For the CSTR the controller operates in deviation coordinates around
 * `deviation_anchor` — operationally the measured pre-run steady state. When
 * no anchor is supplied it falls back to the steady state of the mean
 * parameter. x0 and the log are physical.
 */
ClosedLoopLog closed_loop(const PlantVariant& plant, const PpkoModel& model, const SmpcSpec& spec,
                          const CondensedProblem& cp, const Vec& theta_true, const Vec& x0,
                          int n_steps, const DisturbanceSchedule& disturbances = {},
                          const SolverSettings& solver_settings = {},
                          const Vec* deviation_anchor = nullptr);

/// Open-loop truth simulation (model coordinates in, model coordinates out);
/// columns of the result are x_1..x_H.
Mat simulate_truth(const PlantVariant& plant, const Vec& x0, const Mat& U, const Vec& theta);

/// Lift a physical state exactly as the closed-loop controller does (through
/// the deviation anchor when the plant uses one).
Vec control_lift(const PlantVariant& plant, const PpkoModel& model, const Vec& x_phys,
                 const Vec* deviation_anchor = nullptr);

}  // namespace ppko

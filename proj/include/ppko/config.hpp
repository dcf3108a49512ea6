#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <limits>

#include "ppko/condense.hpp"
#include "ppko/model.hpp"
#include "ppko/simulate.hpp"

namespace ppko {

/**
 * @brief Value in a parsed config file: scalar, string, or (possibly nested)
 * array. The parser accepts the TOML subset used by the shipped presets:
 * sections, comments, booleans, integers, floats (with inf/-inf), strings,
 * and inline arrays.
 */
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<bool, std::int64_t, double, std::string, Array> value;
  int line = 0;

  bool is_array() const { return std::holds_alternative<Array>(value); }
  bool is_string() const { return std::holds_alternative<std::string>(value); }
  bool is_number() const {
    return std::holds_alternative<std::int64_t>(value) || std::holds_alternative<double>(value);
  }

  double as_double() const;
  std::int64_t as_int() const;
  bool as_bool() const;
  const std::string& as_string() const;
  const Array& as_array() const;
  Vec as_vec() const;
  std::vector<int> as_int_list() const;
  std::vector<std::string> as_string_list() const;
};

/// section -> key -> value
using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

ConfigTable parse_config_text(const std::string& text);
ConfigTable parse_config_file(const std::filesystem::path& path);

/// One named Duffing closed-loop regime (parameter triple + start state).
struct DuffingRegime {
  std::string name;
  Vec theta;
  Vec x0;
};

/**
 * @brief Fully validated run configuration. Unknown sections or keys are
 * rejected with the offending line number.
 */
struct RunConfig {
  // plant
  std::string plant_name;  // "duffing" or "cstr"
  DuffingPlant duffing;
  CstrPlant cstr;

  // basis
  int degree = 2;
  std::size_t max_terms = MultiIndexSet::kDefaultCap;

  // dictionary
  int n_learn = 20;
  std::vector<int> hidden = {64, 64};

  // training
  TrainConfig training;
  double stability_cap = std::numeric_limits<double>::infinity();
  int training_restarts = 1;  // dictionary re-initializations until the cap holds

  // data generation
  DataGenSpec data;
  int dump_trajectories = 0;

  // smpc
  SmpcSpec smpc;

  // quadrature
  int quad_nodes_per_dim = 5;

  // validate
  Vec validate_x0;
  int validate_horizon = 40;
  int validate_n_mc = 30000;
  double mean_gap_max = 0.15;
  double sigma_gap_max = 0.15;

  // closed loop
  int cl_n_steps = 200;
  std::vector<std::string> regimes;  // duffing
  Vec cl_x0;                         // duffing fallback start
  int cl_n_realizations = 100;       // cstr
  int cl_warmup_steps = 50;
  int cl_n_windows = 2;
  int cl_window_steps = 100;
  int cl_pulse_steps = 0;   // 0 = persistent steps; otherwise steps revert
  int cl_settle_steps = 0;  // settle gap between disturbance windows
  double disturbance_min = 0.2;
  double disturbance_max = 0.5;
  double recovery_ratio_max = 0.2;

  // bench
  std::vector<int> bench_n_psi = {10, 50, 200};
  int bench_n_steps = 100;
  int bench_retrain_epochs = 5;

  // run
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out_dir = "out";

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_table(const ConfigTable& table);

  PlantVariant plant() const;
  PceBasis basis() const;
  Dictionary dictionary() const;
  std::uint64_t plant_hash() const;
  DuffingRegime regime(const std::string& name) const;
};

}  // namespace ppko

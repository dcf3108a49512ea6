#include "ppko/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ppko/io.hpp"

namespace ppko {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double ConfigValue::as_double() const {
  if (std::holds_alternative<double>(value)) return std::get<double>(value);
  if (std::holds_alternative<std::int64_t>(value))
    return static_cast<double>(std::get<std::int64_t>(value));
  throw ConfigError("expected a number", line);
}

std::int64_t ConfigValue::as_int() const {
  if (std::holds_alternative<std::int64_t>(value)) return std::get<std::int64_t>(value);
  throw ConfigError("expected an integer", line);
}

bool ConfigValue::as_bool() const {
  if (std::holds_alternative<bool>(value)) return std::get<bool>(value);
  throw ConfigError("expected a boolean", line);
}

const std::string& ConfigValue::as_string() const {
  if (std::holds_alternative<std::string>(value)) return std::get<std::string>(value);
  throw ConfigError("expected a string", line);
}

const ConfigValue::Array& ConfigValue::as_array() const {
  if (std::holds_alternative<Array>(value)) return std::get<Array>(value);
  throw ConfigError("expected an array", line);
}

Vec ConfigValue::as_vec() const {
  const Array& arr = as_array();
  Vec v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].as_double();
  return v;
}

std::vector<int> ConfigValue::as_int_list() const {
  const Array& arr = as_array();
  std::vector<int> v;
  for (const auto& e : arr) v.push_back(static_cast<int>(e.as_int()));
  return v;
}

std::vector<std::string> ConfigValue::as_string_list() const {
  const Array& arr = as_array();
  std::vector<std::string> v;
  for (const auto& e : arr) v.push_back(e.as_string());
  return v;
}

// ---------------------------------------------------------------------------
// parser
// ---------------------------------------------------------------------------

namespace {

struct Cursor {
  const std::string& s;
  std::size_t at = 0;
  int line = 0;

  bool done() const { return at >= s.size(); }
  char peek() const { return s[at]; }
  void skip_ws() {
    while (!done() && (s[at] == ' ' || s[at] == '\t')) ++at;
  }
};

ConfigValue parse_value(Cursor& c);

ConfigValue parse_scalar(Cursor& c) {
  ConfigValue v;
  v.line = c.line;
  c.skip_ws();
  if (c.done()) throw ConfigError("missing value", c.line);

  if (c.peek() == '"') {
    ++c.at;
    std::string out;
    while (!c.done() && c.peek() != '"') {
      if (c.peek() == '\\' && c.at + 1 < c.s.size()) {
        ++c.at;
        out += c.peek();
      } else {
        out += c.peek();
      }
      ++c.at;
    }
    if (c.done()) throw ConfigError("unterminated string", c.line);
    ++c.at;
    v.value = out;
    return v;
  }

  std::string tok;
  while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != '#' && c.peek() != ' ' &&
         c.peek() != '\t')
    tok += c.s[c.at++];
  if (tok.empty()) throw ConfigError("missing value", c.line);

  if (tok == "true") v.value = true;
  else if (tok == "false") v.value = false;
  else if (tok == "inf" || tok == "+inf") v.value = kInf;
  else if (tok == "-inf") v.value = -kInf;
  else {
    const bool looks_float = tok.find_first_of(".eE") != std::string::npos || tok == "nan";
    try {
      std::size_t used = 0;
      if (looks_float) {
        v.value = std::stod(tok, &used);
      } else {
        v.value = static_cast<std::int64_t>(std::stoll(tok, &used));
      }
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse value '" + tok + "'", c.line);
    }
  }
  return v;
}

ConfigValue parse_value(Cursor& c) {
  c.skip_ws();
  if (!c.done() && c.peek() == '[') {
    ConfigValue v;
    v.line = c.line;
    ConfigValue::Array arr;
    ++c.at;
    c.skip_ws();
    while (!c.done() && c.peek() != ']') {
      arr.push_back(parse_value(c));
      c.skip_ws();
      if (!c.done() && c.peek() == ',') {
        ++c.at;
        c.skip_ws();
      }
    }
    if (c.done()) throw ConfigError("unterminated array", v.line);
    ++c.at;
    v.value = std::move(arr);
    return v;
  }
  return parse_scalar(c);
}

}  // namespace

ConfigTable parse_config_text(const std::string& text) {
  ConfigTable table;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    // strip comment (not inside a string; presets keep strings comment-free)
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line = line.substr(0, i);
        break;
      }
    }
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", line_no);
      section = line.substr(1, line.size() - 2);
      if (section.empty()) throw ConfigError("empty section name", line_no);
      table[section];
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    std::string key = line.substr(0, eq);
    const auto ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    if (key.empty()) throw ConfigError("empty key", line_no);
    if (section.empty()) throw ConfigError("key outside any [section]", line_no);

    const std::string rhs = line.substr(eq + 1);
    Cursor c{rhs, 0, line_no};
    ConfigValue v = parse_value(c);
    c.skip_ws();
    if (!c.done()) throw ConfigError("trailing characters after value", line_no);
    if (table[section].count(key)) throw ConfigError("duplicate key '" + key + "'", line_no);
    table[section].emplace(key, std::move(v));
  }
  return table;
}

ConfigTable parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

namespace {

// Schema walker: tracks which keys were consumed so unknown keys are errors.
struct SectionReader {
  const std::map<std::string, ConfigValue>* keys = nullptr;
  std::map<std::string, bool> seen;

  const ConfigValue* find(const std::string& key) {
    if (!keys) return nullptr;
    auto it = keys->find(key);
    if (it == keys->end()) return nullptr;
    seen[key] = true;
    return &it->second;
  }

  template <typename T, typename F>
  void get(const std::string& key, T& out, F&& convert) {
    if (const ConfigValue* v = find(key)) out = convert(*v);
  }

  void finish(const std::string& section) const {
    if (!keys) return;
    for (const auto& [key, value] : *keys)
      if (!seen.count(key))
        throw ConfigError("unknown key '" + key + "' in [" + section + "]", value.line);
  }
};

Mat diag_from(const Vec& v) {
  Mat m = Mat::Zero(v.size(), v.size());
  m.diagonal() = v;
  return m;
}

}  // namespace

RunConfig RunConfig::from_table(const ConfigTable& table) {
  static const std::vector<std::string> known_sections = {
      "plant",   "basis",    "dictionary", "training",    "data", "smpc",
      "quadrature", "validate", "closed_loop", "bench", "run"};
  for (const auto& [name, keys] : table) {
    (void)keys;
    if (std::find(known_sections.begin(), known_sections.end(), name) == known_sections.end())
      throw ConfigError("unknown section [" + name + "]");
  }

  RunConfig cfg;
  auto reader = [&](const std::string& name) {
    SectionReader r;
    auto it = table.find(name);
    if (it != table.end()) r.keys = &it->second;
    return r;
  };

  {
    SectionReader r = reader("plant");
    const ConfigValue* name = r.find("name");
    if (!name) throw ConfigError("missing required key 'name' in [plant]");
    cfg.plant_name = name->as_string();
    if (cfg.plant_name != "duffing" && cfg.plant_name != "cstr")
      throw ConfigError("plant name must be 'duffing' or 'cstr'", name->line);

    if (cfg.plant_name == "duffing") {
      r.get("dt", cfg.duffing.dt, [](const ConfigValue& v) { return v.as_double(); });
      if (const ConfigValue* v = r.find("theta_lo")) {
        const Vec lo = v->as_vec();
        if (lo.size() != 3) throw ConfigError("duffing theta_lo needs 3 entries", v->line);
        cfg.duffing.delta_lo = lo[0];
        cfg.duffing.beta_lo = lo[1];
        cfg.duffing.alpha_lo = lo[2];
      }
      if (const ConfigValue* v = r.find("theta_hi")) {
        const Vec hi = v->as_vec();
        if (hi.size() != 3) throw ConfigError("duffing theta_hi needs 3 entries", v->line);
        cfg.duffing.delta_hi = hi[0];
        cfg.duffing.beta_hi = hi[1];
        cfg.duffing.alpha_hi = hi[2];
      }
    } else {
      auto dbl = [](const ConfigValue& v) { return v.as_double(); };
      r.get("dt", cfg.cstr.dt_control, dbl);
      r.get("dt_integration", cfg.cstr.dt_integration, dbl);
      r.get("k3", cfg.cstr.constants.k3, dbl);
      r.get("k4", cfg.cstr.constants.k4, dbl);
      r.get("V", cfg.cstr.constants.V, dbl);
      r.get("q2", cfg.cstr.constants.q2, dbl);
      r.get("cA_in", cfg.cstr.constants.cA_in, dbl);
      r.get("cB_in", cfg.cstr.constants.cB_in, dbl);
      r.get("q1_ss", cfg.cstr.constants.q1_ss, dbl);
      if (const ConfigValue* v = r.find("theta_lo")) {
        const Vec lo = v->as_vec();
        if (lo.size() != 2) throw ConfigError("cstr theta_lo needs 2 entries", v->line);
        cfg.cstr.k1_lo = lo[0];
        cfg.cstr.k2_lo = lo[1];
      }
      if (const ConfigValue* v = r.find("theta_hi")) {
        const Vec hi = v->as_vec();
        if (hi.size() != 2) throw ConfigError("cstr theta_hi needs 2 entries", v->line);
        cfg.cstr.k1_hi = hi[0];
        cfg.cstr.k2_hi = hi[1];
      }
      // Required CSTR constants must be present (no silent paper defaults).
      for (const char* key : {"k3", "k4", "V", "q2", "cA_in", "cB_in", "q1_ss"})
        if (!r.seen.count(key))
          throw ConfigError(std::string("missing required key '") + key + "' in [plant]");
    }
    r.finish("plant");
  }

  {
    SectionReader r = reader("basis");
    r.get("degree", cfg.degree, [](const ConfigValue& v) { return static_cast<int>(v.as_int()); });
    r.get("max_terms", cfg.max_terms,
          [](const ConfigValue& v) { return static_cast<std::size_t>(v.as_int()); });
    r.finish("basis");
  }

  {
    SectionReader r = reader("dictionary");
    r.get("n_learn", cfg.n_learn,
          [](const ConfigValue& v) { return static_cast<int>(v.as_int()); });
    r.get("hidden", cfg.hidden, [](const ConfigValue& v) { return v.as_int_list(); });
    r.finish("dictionary");
  }

  {
    SectionReader r = reader("training");
    auto i = [](const ConfigValue& v) { return static_cast<int>(v.as_int()); };
    auto dbl = [](const ConfigValue& v) { return v.as_double(); };
    r.get("epochs_max", cfg.training.epochs_max, i);
    r.get("batch_size", cfg.training.batch_size, i);
    r.get("patience", cfg.training.patience, i);
    r.get("ridge", cfg.training.ridge, dbl);
    r.get("val_fraction", cfg.training.val_fraction, dbl);
    r.get("lr", cfg.training.adam.lr, dbl);
    if (const ConfigValue* v = r.find("selection")) {
      const std::string& s = v->as_string();
      if (s == "one_step") cfg.training.selection = SelectionMetric::OneStep;
      else if (s == "rollout") cfg.training.selection = SelectionMetric::Rollout;
      else throw ConfigError("selection must be 'one_step' or 'rollout'", v->line);
    }
    r.get("rollout_horizon", cfg.training.rollout_horizon, i);
    r.get("stability_cap", cfg.stability_cap, dbl);
    r.get("restarts", cfg.training_restarts, i);
    r.finish("training");
  }

  {
    SectionReader r = reader("data");
    auto i = [](const ConfigValue& v) { return static_cast<int>(v.as_int()); };
    auto dbl = [](const ConfigValue& v) { return v.as_double(); };
    r.get("n_param_sets", cfg.data.n_param_sets, i);
    r.get("n_ics_per_set", cfg.data.n_ics_per_set, i);
    r.get("n_steps", cfg.data.n_steps, i);
    r.get("ic_lo", cfg.data.ic_lo, [](const ConfigValue& v) { return v.as_vec(); });
    r.get("ic_hi", cfg.data.ic_hi, [](const ConfigValue& v) { return v.as_vec(); });
    r.get("input_scale", cfg.data.input_scale, dbl);
    r.get("u_clip_lo", cfg.data.u_clip_lo, dbl);
    r.get("u_clip_hi", cfg.data.u_clip_hi, dbl);
    r.get("dump_trajectories", cfg.dump_trajectories, i);
    r.finish("data");
  }

  const int n_x = cfg.plant_name == "duffing" ? DuffingPlant::n_x : CstrPlant::n_x;
  const int n_u = cfg.plant_name == "duffing" ? DuffingPlant::n_u : CstrPlant::n_u;

  {
    SectionReader r = reader("smpc");
    r.get("horizon", cfg.smpc.horizon,
          [](const ConfigValue& v) { return static_cast<int>(v.as_int()); });
    Vec q_diag = Vec::Ones(n_x), qf_diag = Vec::Ones(n_x), r_diag = Vec::Ones(n_u);
    if (const ConfigValue* v = r.find("Q")) q_diag = v->as_vec();
    if (const ConfigValue* v = r.find("Qf")) qf_diag = v->as_vec();
    if (const ConfigValue* v = r.find("R")) r_diag = v->as_vec();
    if (q_diag.size() != n_x || qf_diag.size() != n_x)
      throw ConfigError("[smpc] Q/Qf diagonal must have n_x entries");
    if (r_diag.size() != n_u) throw ConfigError("[smpc] R diagonal must have n_u entries");
    cfg.smpc.Q = diag_from(q_diag);
    cfg.smpc.Q_f = diag_from(qf_diag);
    cfg.smpc.R = diag_from(r_diag);
    cfg.smpc.u_min = Vec::Constant(n_u, -kInf);
    cfg.smpc.u_max = Vec::Constant(n_u, kInf);
    if (const ConfigValue* v = r.find("u_min")) cfg.smpc.u_min = v->as_vec();
    if (const ConfigValue* v = r.find("u_max")) cfg.smpc.u_max = v->as_vec();
    if (const ConfigValue* v = r.find("x_min")) {
      const Vec b = v->as_vec();
      if (b.size() > 0) {
        if (b.size() != n_x) throw ConfigError("[smpc] x_min must have n_x entries", v->line);
        cfg.smpc.x_min = b.replicate(1, cfg.smpc.horizon);
      }
    }
    if (const ConfigValue* v = r.find("x_max")) {
      const Vec b = v->as_vec();
      if (b.size() > 0) {
        if (b.size() != n_x) throw ConfigError("[smpc] x_max must have n_x entries", v->line);
        cfg.smpc.x_max = b.replicate(1, cfg.smpc.horizon);
      }
    }
    if (const ConfigValue* v = r.find("moment_constraints")) {
      for (const auto& row : v->as_array()) {
        const auto& entry = row.as_array();
        if (entry.size() != static_cast<std::size_t>(3 + n_x))
          throw ConfigError("moment constraint rows are [t, b, c, a_1..a_nx]", row.line);
        MomentConstraint mc;
        mc.t = static_cast<int>(entry[0].as_int());
        mc.b = entry[1].as_double();
        mc.c = entry[2].as_double();
        mc.a = Vec(n_x);
        for (int i = 0; i < n_x; ++i) mc.a[i] = entry[static_cast<std::size_t>(3 + i)].as_double();
        cfg.smpc.moment_constraints.push_back(std::move(mc));
      }
    }
    r.finish("smpc");
  }

  {
    SectionReader r = reader("quadrature");
    r.get("nodes_per_dim", cfg.quad_nodes_per_dim,
          [](const ConfigValue& v) { return static_cast<int>(v.as_int()); });
    r.finish("quadrature");
  }

  {
    SectionReader r = reader("validate");
    auto i = [](const ConfigValue& v) { return static_cast<int>(v.as_int()); };
    auto dbl = [](const ConfigValue& v) { return v.as_double(); };
    r.get("x0", cfg.validate_x0, [](const ConfigValue& v) { return v.as_vec(); });
    r.get("horizon", cfg.validate_horizon, i);
    r.get("n_mc", cfg.validate_n_mc, i);
    r.get("mean_gap_max", cfg.mean_gap_max, dbl);
    r.get("sigma_gap_max", cfg.sigma_gap_max, dbl);
    r.finish("validate");
  }

  {
    SectionReader r = reader("closed_loop");
    auto i = [](const ConfigValue& v) { return static_cast<int>(v.as_int()); };
    auto dbl = [](const ConfigValue& v) { return v.as_double(); };
    r.get("n_steps", cfg.cl_n_steps, i);
    r.get("regimes", cfg.regimes, [](const ConfigValue& v) { return v.as_string_list(); });
    r.get("x0", cfg.cl_x0, [](const ConfigValue& v) { return v.as_vec(); });
    r.get("n_realizations", cfg.cl_n_realizations, i);
    r.get("warmup_steps", cfg.cl_warmup_steps, i);
    r.get("n_windows", cfg.cl_n_windows, i);
    r.get("window_steps", cfg.cl_window_steps, i);
    r.get("pulse_steps", cfg.cl_pulse_steps, i);
    r.get("settle_steps", cfg.cl_settle_steps, i);
    r.get("disturbance_min", cfg.disturbance_min, dbl);
    r.get("disturbance_max", cfg.disturbance_max, dbl);
    r.get("recovery_ratio_max", cfg.recovery_ratio_max, dbl);
    r.finish("closed_loop");
  }

  {
    SectionReader r = reader("bench");
    auto i = [](const ConfigValue& v) { return static_cast<int>(v.as_int()); };
    r.get("n_psi_list", cfg.bench_n_psi, [](const ConfigValue& v) { return v.as_int_list(); });
    r.get("n_steps", cfg.bench_n_steps, i);
    r.get("retrain_epochs", cfg.bench_retrain_epochs, i);
    r.finish("bench");
  }

  {
    SectionReader r = reader("run");
    r.get("seed", cfg.seed,
          [](const ConfigValue& v) { return static_cast<std::uint64_t>(v.as_int()); });
    r.get("threads", cfg.threads,
          [](const ConfigValue& v) { return static_cast<int>(v.as_int()); });
    if (const ConfigValue* v = r.find("out_dir")) cfg.out_dir = v->as_string();
    r.finish("run");
  }

  cfg.training.seed = cfg.seed;
  cfg.training.threads = cfg.threads;
  cfg.data.seed = cfg.seed;

  // Basic cross-field validation; detailed checks happen in the modules.
  if (cfg.data.ic_lo.size() == 0) {
    cfg.data.ic_lo = Vec::Constant(n_x, -2.0);
    cfg.data.ic_hi = Vec::Constant(n_x, 2.0);
  }
  if (cfg.data.ic_lo.size() != n_x)
    throw ConfigError("[data] ic_lo/ic_hi must have n_x entries");
  if (cfg.validate_x0.size() == 0) cfg.validate_x0 = Vec::Zero(n_x);
  if (cfg.validate_x0.size() != n_x) throw ConfigError("[validate] x0 must have n_x entries");
  if (cfg.cl_x0.size() == 0) cfg.cl_x0 = Vec::Zero(n_x);
  if (cfg.cl_x0.size() != n_x) throw ConfigError("[closed_loop] x0 must have n_x entries");
  cfg.smpc.validate(n_x, n_u);
  cfg.data.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  return from_table(parse_config_file(path));
}

PlantVariant RunConfig::plant() const {
  if (plant_name == "duffing") return duffing;
  return cstr;
}

PceBasis RunConfig::basis() const { return PceBasis(plant_families(plant()), degree, max_terms); }

Dictionary RunConfig::dictionary() const {
  const int n_x = plant_name == "duffing" ? DuffingPlant::n_x : CstrPlant::n_x;
  return Dictionary(n_x, n_learn, hidden, derive_seed(seed, "dict-init"));
}

std::uint64_t RunConfig::plant_hash() const {
  std::string bytes = plant_name;
  auto add = [&](double v) { bytes.append(reinterpret_cast<const char*>(&v), sizeof v); };
  if (plant_name == "duffing") {
    add(duffing.dt);
    add(duffing.delta_lo);
    add(duffing.delta_hi);
    add(duffing.beta_lo);
    add(duffing.beta_hi);
    add(duffing.alpha_lo);
    add(duffing.alpha_hi);
  } else {
    add(cstr.dt_control);
    add(cstr.dt_integration);
    add(cstr.constants.k3);
    add(cstr.constants.k4);
    add(cstr.constants.V);
    add(cstr.constants.q2);
    add(cstr.constants.cA_in);
    add(cstr.constants.cB_in);
    add(cstr.constants.q1_ss);
    add(cstr.k1_lo);
    add(cstr.k1_hi);
    add(cstr.k2_lo);
    add(cstr.k2_hi);
  }
  return fnv1a64(bytes);
}

DuffingRegime RunConfig::regime(const std::string& name) const {
  // Canonical parameter triples for the three qualitative Duffing regimes.
  Vec x0 = cl_x0;
  if (name == "damped_double_well") {
    Vec th(3);
    th << 0.5, -1.0, 1.0;
    return {name, th, x0};
  }
  if (name == "damped_single_well") {
    Vec th(3);
    th << 0.5, 1.0, 1.0;
    return {name, th, x0};
  }
  if (name == "undamped_double_well") {
    Vec th(3);
    th << 0.0, -1.0, 1.0;
    Vec start(2);
    start << 0.3, 0.3;  // saddle-adjacent start
    return {name, th, start};
  }
  throw ConfigError("unknown regime '" + name + "'");
}

}  // namespace ppko

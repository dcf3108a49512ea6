#include "ppko/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace ppko {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& bytes) { return fnv1a64(bytes.data(), bytes.size()); }

std::uint64_t hash_file(const fs::path& path) { return fnv1a64(read_file(path)); }

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// container
// ---------------------------------------------------------------------------

Eigen::Index NamedArray::element_count() const {
  Eigen::Index n = 1;
  for (Eigen::Index s : shape) n *= s;
  return n;
}

NamedArray NamedArray::from_matrix(std::string name, const Mat& m) {
  NamedArray a;
  a.name = std::move(name);
  a.shape = {m.rows(), m.cols()};
  a.f64.resize(static_cast<std::size_t>(m.size()));
  // row-major on disk
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      a.f64.data(), m.rows(), m.cols()) = m;
  return a;
}

NamedArray NamedArray::from_vector(std::string name, const Vec& v) {
  NamedArray a;
  a.name = std::move(name);
  a.shape = {v.size()};
  a.f64.assign(v.data(), v.data() + v.size());
  return a;
}

NamedArray NamedArray::from_int_vector(std::string name, const Eigen::VectorXi& v) {
  NamedArray a;
  a.name = std::move(name);
  a.shape = {v.size()};
  a.is_int = true;
  a.i64.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) a.i64[static_cast<std::size_t>(i)] = v[i];
  return a;
}

Mat NamedArray::to_matrix() const {
  if (shape.size() != 2) throw IoError("array '" + name + "' is not a matrix");
  Mat m(shape[0], shape[1]);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> src(
      f64.data(), shape[0], shape[1]);
  m = src;
  return m;
}

Vec NamedArray::to_vector() const {
  if (shape.size() != 1) throw IoError("array '" + name + "' is not a vector");
  return Eigen::Map<const Vec>(f64.data(), shape[0]);
}

Eigen::VectorXi NamedArray::to_int_vector() const {
  if (shape.size() != 1 || !is_int) throw IoError("array '" + name + "' is not an int vector");
  Eigen::VectorXi v(shape[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = static_cast<int>(i64[static_cast<std::size_t>(i)]);
  return v;
}

std::string pack_container(const std::string& magic, const Json& meta,
                           const std::vector<NamedArray>& arrays) {
  if (magic.size() != 8) throw ContractError("pack_container: magic must be 8 bytes");

  Json header;
  header["meta"] = meta;
  header["arrays"] = Json::array();
  for (const auto& a : arrays) {
    Json ja;
    ja["name"] = a.name;
    ja["dtype"] = a.is_int ? "i64" : "f64";
    ja["shape"] = a.shape;
    header["arrays"].push_back(ja);
  }
  const std::string header_str = header.dump();

  std::string out;
  out.reserve(16 + header_str.size());
  out.append(magic);
  const auto hsize = static_cast<std::uint64_t>(header_str.size());
  char sz[8];
  std::memcpy(sz, &hsize, 8);  // little-endian host assumed, recorded below
  out.append(sz, 8);
  out.append(header_str);
  for (const auto& a : arrays) {
    if (a.is_int) {
      if (static_cast<Eigen::Index>(a.i64.size()) != a.element_count())
        throw ContractError("pack_container: '" + a.name + "' shape/data mismatch");
      out.append(reinterpret_cast<const char*>(a.i64.data()), a.i64.size() * 8);
    } else {
      if (static_cast<Eigen::Index>(a.f64.size()) != a.element_count())
        throw ContractError("pack_container: '" + a.name + "' shape/data mismatch");
      out.append(reinterpret_cast<const char*>(a.f64.data()), a.f64.size() * 8);
    }
  }
  return out;
}

void unpack_container(const std::string& bytes, const std::string& magic, Json& meta,
                      std::map<std::string, NamedArray>& arrays) {
  if (bytes.size() < 16 || bytes.compare(0, 8, magic) != 0)
    throw IoError("container: bad magic (expected " + magic + ")");
  std::uint64_t hsize = 0;
  std::memcpy(&hsize, bytes.data() + 8, 8);
  if (16 + hsize > bytes.size()) throw IoError("container: truncated header");
  Json header = Json::parse(bytes.substr(16, hsize));
  meta = header.at("meta");

  std::size_t at = 16 + hsize;
  arrays.clear();
  for (const auto& ja : header.at("arrays")) {
    NamedArray a;
    a.name = ja.at("name").get<std::string>();
    a.is_int = ja.at("dtype").get<std::string>() == "i64";
    for (const auto& s : ja.at("shape")) a.shape.push_back(s.get<Eigen::Index>());
    const auto count = static_cast<std::size_t>(a.element_count());
    if (at + count * 8 > bytes.size()) throw IoError("container: truncated array " + a.name);
    if (a.is_int) {
      a.i64.resize(count);
      std::memcpy(a.i64.data(), bytes.data() + at, count * 8);
    } else {
      a.f64.resize(count);
      std::memcpy(a.f64.data(), bytes.data() + at, count * 8);
    }
    at += count * 8;
    arrays.emplace(a.name, std::move(a));
  }
}

// ---------------------------------------------------------------------------
// model file
// ---------------------------------------------------------------------------

namespace {

Json basis_descriptor(const PceBasis& basis) {
  Json j;
  j["degree"] = basis.degree();
  j["ordering"] = "grlex";
  j["families"] = Json::array();
  for (const auto& fam : basis.families()) {
    Json f;
    if (fam.kind() == PolyKind::Legendre) {
      f["kind"] = "legendre";
      f["lo"] = fam.param_lo();
      f["hi"] = fam.param_hi();
    } else {
      f["kind"] = "hermite";
      f["mean"] = fam.param_mean();
      f["std"] = fam.param_std();
    }
    j["families"].push_back(f);
  }
  return j;
}

PceBasis basis_from_descriptor(const Json& j) {
  std::vector<PolyFamily> families;
  for (const auto& f : j.at("families")) {
    const std::string kind = f.at("kind").get<std::string>();
    if (kind == "legendre")
      families.push_back(PolyFamily::uniform(f.at("lo").get<double>(), f.at("hi").get<double>()));
    else if (kind == "hermite")
      families.push_back(
          PolyFamily::gaussian(f.at("mean").get<double>(), f.at("std").get<double>()));
    else
      throw IoError("basis descriptor: unknown family kind '" + kind + "'");
  }
  return PceBasis(std::move(families), j.at("degree").get<int>());
}

}  // namespace

std::string serialize_model(const PpkoModel& model, const ModelMetadata& meta) {
  model.check_consistent();
  Json m;
  m["format"] = 1;
  m["endianness"] = "little";
  m["n_x"] = model.n_x();
  m["n_u"] = model.n_u();
  m["n_psi"] = model.n_psi();
  m["n_terms"] = model.n_terms();
  m["basis"] = basis_descriptor(model.basis);
  m["dict"] = {{"n_learn", model.dict.n_learn()}, {"hidden", model.dict.hidden_widths()}};
  m["train"] = {{"seed", meta.seed},
                {"ridge", meta.ridge},
                {"best_epoch", meta.best_epoch},
                {"final_train_mse", meta.final_train_mse},
                {"final_val_mse", meta.final_val_mse}};
  m["plant_hash"] = hash_hex(meta.plant_hash);

  std::vector<NamedArray> arrays;
  const auto& Ws = model.dict.layer_weights();
  const auto& bs = model.dict.layer_biases();
  for (std::size_t l = 0; l < Ws.size(); ++l) {
    arrays.push_back(NamedArray::from_matrix("dict.W" + std::to_string(l), Ws[l]));
    arrays.push_back(NamedArray::from_vector("dict.b" + std::to_string(l), bs[l]));
  }
  NamedArray A;
  A.name = "A_coeffs";
  A.shape = {static_cast<Eigen::Index>(model.n_terms()), model.n_psi(), model.n_psi()};
  for (const auto& Ak : model.A_coeffs) {
    const NamedArray one = NamedArray::from_matrix("", Ak);
    A.f64.insert(A.f64.end(), one.f64.begin(), one.f64.end());
  }
  arrays.push_back(std::move(A));
  if (model.n_u() > 0) {
    NamedArray B;
    B.name = "B_coeffs";
    B.shape = {static_cast<Eigen::Index>(model.n_terms()), model.n_psi(), model.n_u()};
    for (const auto& Bk : model.B_coeffs) {
      const NamedArray one = NamedArray::from_matrix("", Bk);
      B.f64.insert(B.f64.end(), one.f64.begin(), one.f64.end());
    }
    arrays.push_back(std::move(B));
  }
  arrays.push_back(NamedArray::from_matrix("C", model.C));
  return pack_container("PPKOMDL1", m, arrays);
}

void save_model(const fs::path& path, const PpkoModel& model, const ModelMetadata& meta) {
  atomic_write(path, serialize_model(model, meta));
}

PpkoModel load_model(const fs::path& path, ModelMetadata* meta_out) {
  Json meta;
  std::map<std::string, NamedArray> arrays;
  unpack_container(read_file(path), "PPKOMDL1", meta, arrays);

  PceBasis basis = basis_from_descriptor(meta.at("basis"));
  const int n_x = meta.at("n_x").get<int>();
  const int n_u = meta.at("n_u").get<int>();
  const int n_psi = meta.at("n_psi").get<int>();
  const int n_learn = meta.at("dict").at("n_learn").get<int>();
  const std::vector<int> hidden = meta.at("dict").at("hidden").get<std::vector<int>>();

  Dictionary dict(n_x, n_learn, hidden, 0);
  if (n_learn > 0) {
    std::vector<Mat> Ws;
    std::vector<Vec> bs;
    for (std::size_t l = 0;; ++l) {
      const std::string wname = "dict.W" + std::to_string(l);
      if (!arrays.count(wname)) break;
      Ws.push_back(arrays.at(wname).to_matrix());
      bs.push_back(arrays.at("dict.b" + std::to_string(l)).to_vector());
    }
    dict.set_layers(std::move(Ws), std::move(bs));
  }

  PpkoModel model{std::move(basis), std::move(dict), {}, {}, Mat()};
  const NamedArray& A = arrays.at("A_coeffs");
  const auto n_terms = static_cast<std::size_t>(A.shape.at(0));
  for (std::size_t k = 0; k < n_terms; ++k) {
    NamedArray slice;
    slice.name = "A_k";
    slice.shape = {n_psi, n_psi};
    const std::size_t stride = static_cast<std::size_t>(n_psi) * n_psi;
    slice.f64.assign(A.f64.begin() + static_cast<std::ptrdiff_t>(k * stride),
                     A.f64.begin() + static_cast<std::ptrdiff_t>((k + 1) * stride));
    model.A_coeffs.push_back(slice.to_matrix());
  }
  if (n_u > 0) {
    const NamedArray& B = arrays.at("B_coeffs");
    for (std::size_t k = 0; k < n_terms; ++k) {
      NamedArray slice;
      slice.name = "B_k";
      slice.shape = {n_psi, n_u};
      const std::size_t stride = static_cast<std::size_t>(n_psi) * n_u;
      slice.f64.assign(B.f64.begin() + static_cast<std::ptrdiff_t>(k * stride),
                       B.f64.begin() + static_cast<std::ptrdiff_t>((k + 1) * stride));
      model.B_coeffs.push_back(slice.to_matrix());
    }
  }
  model.C = arrays.at("C").to_matrix();
  model.check_consistent();

  if (meta_out) {
    meta_out->seed = meta.at("train").at("seed").get<std::uint64_t>();
    meta_out->ridge = meta.at("train").at("ridge").get<double>();
    meta_out->best_epoch = meta.at("train").at("best_epoch").get<int>();
    meta_out->final_train_mse = meta.at("train").at("final_train_mse").get<double>();
    meta_out->final_val_mse = meta.at("train").at("final_val_mse").get<double>();
    meta_out->plant_hash = std::stoull(meta.at("plant_hash").get<std::string>(), nullptr, 16);
  }
  return model;
}

// ---------------------------------------------------------------------------
// dataset file
// ---------------------------------------------------------------------------

std::string serialize_dataset(const Dataset& data, const Json& manifest) {
  Json m = manifest;
  m["n_x"] = data.n_x;
  m["n_u"] = data.n_u;
  m["d"] = data.d;
  m["count"] = data.size();
  std::vector<NamedArray> arrays;
  arrays.push_back(NamedArray::from_matrix("X", data.X));
  arrays.push_back(NamedArray::from_matrix("U", data.U));
  arrays.push_back(NamedArray::from_matrix("Xp", data.Xp));
  arrays.push_back(NamedArray::from_matrix("Theta", data.Theta));
  arrays.push_back(NamedArray::from_int_vector("traj", data.traj));
  return pack_container("PPKODAT1", m, arrays);
}

void save_dataset(const fs::path& path, const Dataset& data, const Json& manifest) {
  atomic_write(path, serialize_dataset(data, manifest));
}

Dataset load_dataset(const fs::path& path, Json* manifest) {
  Json meta;
  std::map<std::string, NamedArray> arrays;
  unpack_container(read_file(path), "PPKODAT1", meta, arrays);
  Dataset data;
  data.n_x = meta.at("n_x").get<int>();
  data.n_u = meta.at("n_u").get<int>();
  data.d = meta.at("d").get<int>();
  data.X = arrays.at("X").to_matrix();
  data.U = arrays.at("U").to_matrix();
  data.Xp = arrays.at("Xp").to_matrix();
  data.Theta = arrays.at("Theta").to_matrix();
  data.traj = arrays.at("traj").to_int_vector();
  if (manifest) *manifest = meta;
  return data;
}

// ---------------------------------------------------------------------------
// condensed cache
// ---------------------------------------------------------------------------

void save_condensed(const fs::path& path, const CondensedProblem& cp) {
  Json m;
  m["horizon"] = cp.horizon;
  m["n_x"] = cp.n_x;
  m["n_u"] = cp.n_u;
  m["n_psi"] = cp.n_psi;
  m["model_hash"] = hash_hex(cp.model_hash);
  m["spec_hash"] = hash_hex(cp.spec_hash);
  m["quad_hash"] = hash_hex(cp.quad_hash);
  m["n_moments"] = cp.moments.size();
  Json moments = Json::array();
  for (const auto& cm : cp.moments) {
    Json jm;
    jm["t"] = cm.source.t;
    jm["b"] = cm.source.b;
    jm["c"] = cm.source.c;
    moments.push_back(jm);
  }
  m["moments"] = moments;

  std::vector<NamedArray> arrays;
  arrays.push_back(NamedArray::from_matrix("H", cp.H));
  arrays.push_back(NamedArray::from_matrix("W_gE", cp.W_gE));
  arrays.push_back(NamedArray::from_matrix("W_EE", cp.W_EE));
  arrays.push_back(NamedArray::from_matrix("E_bar", cp.E_bar));
  arrays.push_back(NamedArray::from_matrix("F_bar", cp.F_bar));
  arrays.push_back(NamedArray::from_matrix("x_min", cp.x_min));
  arrays.push_back(NamedArray::from_matrix("x_max", cp.x_max));
  arrays.push_back(NamedArray::from_vector("u_min", cp.u_min));
  arrays.push_back(NamedArray::from_vector("u_max", cp.u_max));
  for (std::size_t i = 0; i < cp.moments.size(); ++i) {
    arrays.push_back(NamedArray::from_matrix("moment.M" + std::to_string(i), cp.moments[i].M));
    arrays.push_back(NamedArray::from_vector("moment.c" + std::to_string(i), cp.moments[i].c));
    arrays.push_back(NamedArray::from_vector("moment.a" + std::to_string(i), cp.moments[i].source.a));
  }
  atomic_write(path, pack_container("PPKOCCH1", m, arrays));
}

CondensedProblem load_condensed(const fs::path& path) {
  Json meta;
  std::map<std::string, NamedArray> arrays;
  unpack_container(read_file(path), "PPKOCCH1", meta, arrays);
  CondensedProblem cp;
  cp.horizon = meta.at("horizon").get<int>();
  cp.n_x = meta.at("n_x").get<int>();
  cp.n_u = meta.at("n_u").get<int>();
  cp.n_psi = meta.at("n_psi").get<int>();
  cp.model_hash = std::stoull(meta.at("model_hash").get<std::string>(), nullptr, 16);
  cp.spec_hash = std::stoull(meta.at("spec_hash").get<std::string>(), nullptr, 16);
  cp.quad_hash = std::stoull(meta.at("quad_hash").get<std::string>(), nullptr, 16);
  cp.H = arrays.at("H").to_matrix();
  cp.W_gE = arrays.at("W_gE").to_matrix();
  cp.W_EE = arrays.at("W_EE").to_matrix();
  cp.E_bar = arrays.at("E_bar").to_matrix();
  cp.F_bar = arrays.at("F_bar").to_matrix();
  cp.x_min = arrays.at("x_min").to_matrix();
  cp.x_max = arrays.at("x_max").to_matrix();
  cp.u_min = arrays.at("u_min").to_vector();
  cp.u_max = arrays.at("u_max").to_vector();
  std::size_t i = 0;
  for (const auto& jm : meta.at("moments")) {
    CondensedProblem::CondensedMoment cm;
    cm.source.t = jm.at("t").get<int>();
    cm.source.b = jm.at("b").get<double>();
    cm.source.c = jm.at("c").get<double>();
    cm.source.a = arrays.at("moment.a" + std::to_string(i)).to_vector();
    cm.M = arrays.at("moment.M" + std::to_string(i)).to_matrix();
    cm.c = arrays.at("moment.c" + std::to_string(i)).to_vector();
    cp.moments.push_back(std::move(cm));
    ++i;
  }
  return cp;
}

std::uint64_t hash_spec(const SmpcSpec& spec) {
  std::string bytes;
  auto add_mat = [&](const Mat& m) {
    const auto r = m.rows(), c = m.cols();
    bytes.append(reinterpret_cast<const char*>(&r), sizeof r);
    bytes.append(reinterpret_cast<const char*>(&c), sizeof c);
    bytes.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * 8);
  };
  const auto h = static_cast<std::int64_t>(spec.horizon);
  bytes.append(reinterpret_cast<const char*>(&h), sizeof h);
  add_mat(spec.Q);
  add_mat(spec.R);
  add_mat(spec.Q_f);
  add_mat(spec.x_min);
  add_mat(spec.x_max);
  add_mat(spec.u_min);
  add_mat(spec.u_max);
  for (const auto& mc : spec.moment_constraints) {
    const auto t = static_cast<std::int64_t>(mc.t);
    bytes.append(reinterpret_cast<const char*>(&t), sizeof t);
    add_mat(mc.a);
    bytes.append(reinterpret_cast<const char*>(&mc.b), sizeof mc.b);
    bytes.append(reinterpret_cast<const char*>(&mc.c), sizeof mc.c);
  }
  return fnv1a64(bytes);
}

std::uint64_t hash_quadrature(const QuadratureRule& quad) {
  std::string bytes;
  const auto r = quad.nodes.rows(), c = quad.nodes.cols();
  bytes.append(reinterpret_cast<const char*>(&r), sizeof r);
  bytes.append(reinterpret_cast<const char*>(&c), sizeof c);
  bytes.append(reinterpret_cast<const char*>(quad.nodes.data()),
               static_cast<std::size_t>(quad.nodes.size()) * 8);
  bytes.append(reinterpret_cast<const char*>(quad.weights.data()),
               static_cast<std::size_t>(quad.weights.size()) * 8);
  return fnv1a64(bytes);
}

CondensedProblem condense_cached(const PpkoModel& model, const SmpcSpec& spec,
                                 const QuadratureRule& quad, std::uint64_t model_hash,
                                 const fs::path& cache_dir, bool* cache_hit) {
  const std::uint64_t sh = hash_spec(spec);
  const std::uint64_t qh = hash_quadrature(quad);
  const fs::path file = cache_dir / ("condensed_" + hash_hex(model_hash) + "_" + hash_hex(sh) +
                                     "_" + hash_hex(qh) + ".bin");
  if (fs::exists(file)) {
    CondensedProblem cp = load_condensed(file);
    if (cp.model_hash == model_hash && cp.spec_hash == sh && cp.quad_hash == qh) {
      if (cache_hit) *cache_hit = true;
      return cp;
    }
  }
  CondensedProblem cp = condense(model, spec, quad);
  cp.model_hash = model_hash;
  cp.spec_hash = sh;
  cp.quad_hash = qh;
  save_condensed(file, cp);
  if (cache_hit) *cache_hit = false;
  return cp;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string envelope_csv(const EnvelopeSeries& env) {
  const Eigen::Index n_x = env.mean.rows();
  std::string out = "step,time";
  for (Eigen::Index i = 0; i < n_x; ++i) out += ",mean_x" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < n_x; ++i) out += ",sigma_x" + std::to_string(i + 1);
  out += ",source\n";
  for (Eigen::Index t = 0; t < env.mean.cols(); ++t) {
    out += std::to_string(t) + "," + format_double(env.dt * static_cast<double>(t));
    for (Eigen::Index i = 0; i < n_x; ++i) out += "," + format_double(env.mean(i, t));
    for (Eigen::Index i = 0; i < n_x; ++i) out += "," + format_double(env.sigma(i, t));
    out += "," + env.source + "\n";
  }
  return out;
}

std::string closed_loop_csv(const ClosedLoopLog& log) {
  std::string out = "step,time";
  if (!log.steps.empty()) {
    for (Eigen::Index i = 0; i < log.steps.front().x.size(); ++i)
      out += ",x" + std::to_string(i + 1);
    for (Eigen::Index i = 0; i < log.steps.front().u.size(); ++i)
      out += ",u" + std::to_string(i + 1);
  }
  out += ",status,iterations,solve_time_s,objective\n";
  for (std::size_t t = 0; t < log.steps.size(); ++t) {
    const auto& st = log.steps[t];
    out += std::to_string(t) + "," + format_double(log.dt * static_cast<double>(t));
    for (Eigen::Index i = 0; i < st.x.size(); ++i) out += "," + format_double(st.x[i]);
    for (Eigen::Index i = 0; i < st.u.size(); ++i) out += "," + format_double(st.u[i]);
    out += std::string(",") + to_string(st.status) + "," + std::to_string(st.iterations) + "," +
           format_double(st.solve_time_s) + "," + format_double(st.objective) + "\n";
  }
  return out;
}

std::string training_log_csv(const TrainLog& log) {
  std::string out =
      "epoch,train_mse,train_obj_pre_fit,train_obj_post_fit,val_mse,val_rollout_mse,rho_max,"
      "best_val_mse\n";
  for (const auto& e : log.epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_mse) + "," +
           format_double(e.train_obj_pre) + "," + format_double(e.train_obj_post) + "," +
           format_double(e.val_mse) + "," + format_double(e.val_rollout_mse) + "," +
           format_double(e.rho_max) + "," + format_double(e.best_val_mse) + "\n";
  }
  return out;
}

std::string trajectory_csv(double dt, const Vec& x0, const Mat& X, const Mat& U,
                           const Vec& theta) {
  const Eigen::Index n_x = x0.size();
  std::string out = "t";
  for (Eigen::Index i = 0; i < n_x; ++i) out += ",x" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < U.rows(); ++i) out += ",u" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < theta.size(); ++i) out += ",theta" + std::to_string(i + 1);
  out += "\n";
  auto row = [&](Eigen::Index t, const Vec& x, bool with_u) {
    out += format_double(dt * static_cast<double>(t));
    for (Eigen::Index i = 0; i < n_x; ++i) out += "," + format_double(x[i]);
    for (Eigen::Index i = 0; i < U.rows(); ++i)
      out += "," + format_double(with_u && t < U.cols() ? U(i, t) : 0.0);
    for (Eigen::Index i = 0; i < theta.size(); ++i) out += "," + format_double(theta[i]);
    out += "\n";
  };
  row(0, x0, true);
  for (Eigen::Index t = 0; t < X.cols(); ++t) row(t + 1, X.col(t), t + 1 < U.cols());
  return out;
}

void write_json(const fs::path& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

}  // namespace ppko

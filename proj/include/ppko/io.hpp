#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppko/condense.hpp"
#include "ppko/dataset.hpp"
#include "ppko/model.hpp"
#include "ppko/simulate.hpp"

namespace ppko {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// hashing and atomic file output
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

/// Writes via a temp file + rename so partial outputs are never left behind.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// JSON-headed binary container: magic(8) | u64 header size | header | arrays
// (little-endian float64 / int64, row-major, shapes recorded in the header)
// ---------------------------------------------------------------------------

struct NamedArray {
  std::string name;
  std::vector<Eigen::Index> shape;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  bool is_int = false;

  static NamedArray from_matrix(std::string name, const Mat& m);
  static NamedArray from_vector(std::string name, const Vec& v);
  static NamedArray from_int_vector(std::string name, const Eigen::VectorXi& v);
  Mat to_matrix() const;
  Vec to_vector() const;
  Eigen::VectorXi to_int_vector() const;
  Eigen::Index element_count() const;
};

std::string pack_container(const std::string& magic, const Json& meta,
                           const std::vector<NamedArray>& arrays);
void unpack_container(const std::string& bytes, const std::string& magic, Json& meta,
                      std::map<std::string, NamedArray>& arrays);

// ---------------------------------------------------------------------------
// model / dataset / condensed-cache files
// ---------------------------------------------------------------------------

struct ModelMetadata {
  std::uint64_t seed = 0;
  double ridge = 0.0;
  int best_epoch = 0;
  double final_train_mse = 0.0;
  double final_val_mse = 0.0;
  std::uint64_t plant_hash = 0;
};

std::string serialize_model(const PpkoModel& model, const ModelMetadata& meta);
void save_model(const std::filesystem::path& path, const PpkoModel& model,
                const ModelMetadata& meta);
PpkoModel load_model(const std::filesystem::path& path, ModelMetadata* meta = nullptr);

std::string serialize_dataset(const Dataset& data, const Json& manifest);
void save_dataset(const std::filesystem::path& path, const Dataset& data, const Json& manifest);
Dataset load_dataset(const std::filesystem::path& path, Json* manifest = nullptr);

void save_condensed(const std::filesystem::path& path, const CondensedProblem& cp);
CondensedProblem load_condensed(const std::filesystem::path& path);

/// Content hashes used for the condensed-matrix disk cache key.
std::uint64_t hash_spec(const SmpcSpec& spec);
std::uint64_t hash_quadrature(const QuadratureRule& quad);

/// condense() with a disk cache keyed by (model, spec, quadrature) hashes.
CondensedProblem condense_cached(const PpkoModel& model, const SmpcSpec& spec,
                                 const QuadratureRule& quad, std::uint64_t model_hash,
                                 const std::filesystem::path& cache_dir,
                                 bool* cache_hit = nullptr);

// ---------------------------------------------------------------------------
// CSV and JSON outputs (floats rendered with 17 significant digits)
// ---------------------------------------------------------------------------

std::string format_double(double v);

std::string envelope_csv(const EnvelopeSeries& env);
std::string closed_loop_csv(const ClosedLoopLog& log);
std::string training_log_csv(const TrainLog& log);
std::string trajectory_csv(double dt, const Vec& x0, const Mat& X, const Mat& U, const Vec& theta);

void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace ppko

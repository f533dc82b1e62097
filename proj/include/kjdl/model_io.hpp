#ifndef KJDL_MODEL_IO_HPP
#define KJDL_MODEL_IO_HPP

#include <cstdio>
#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "kjdl/data_io.hpp"
#include "kjdl/kernel.hpp"
#include "kjdl/model.hpp"
#include "kjdl/task.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Model persistence. Binary container (little-endian):
//   magic "KJDL", version u32, n u32, d u32, atoms row-major f64,
//   then (for full models) C u32, d u32, W row-major f64.
// Every container gets a JSON sidecar at <path>.json echoing provenance and
// content fingerprints, so runs are reproducible from artifacts alone.
// ---------------------------------------------------------------------------

using json = nlohmann::json;

inline std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return std::string(buf);
}

inline json kernel_to_json(const KernelSpec& spec) {
  json j;
  j["kind"] = kernel_kind_name(spec.kind);
  if (spec.kind == KernelKind::Gaussian) j["sigma"] = spec.sigma;
  if (spec.kind == KernelKind::Polynomial) j["degree"] = spec.degree;
  return j;
}

inline KernelSpec kernel_from_json(const json& j) {
  KernelSpec spec;
  spec.kind = kernel_kind_from_name(j.at("kind").get<std::string>());
  spec.sigma = j.value("sigma", spec.sigma);
  spec.degree = j.value("degree", spec.degree);
  spec.validate();
  return spec;
}

inline json solver_to_json(const SolverOptions& o) {
  return json{{"max_iters", o.max_iters},
              {"kkt_tol", o.kkt_tol},
              {"active_tol", o.active_tol},
              {"polish", o.polish}};
}

inline SolverOptions solver_from_json(const json& j) {
  SolverOptions o;
  o.max_iters = j.value("max_iters", o.max_iters);
  o.kkt_tol = j.value("kkt_tol", o.kkt_tol);
  o.active_tol = j.value("active_tol", o.active_tol);
  o.polish = j.value("polish", o.polish);
  return o;
}

inline json train_config_to_json(const TrainConfig& c) {
  json j;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["nu"] = c.nu;
  j["rho"] = c.rho;
  j["t0"] = c.t0;
  j["T"] = c.T;
  j["S"] = static_cast<int>(c.S);
  j["kernel"] = kernel_to_json(c.kernel);
  j["seed"] = c.seed;
  j["solver"] = solver_to_json(c.solver);
  return j;
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.nu = j.value("nu", c.nu);
  c.rho = j.value("rho", c.rho);
  c.t0 = j.value("t0", c.t0);
  c.T = j.value("T", c.T);
  c.S = j.value("S", static_cast<int>(c.S));
  if (j.contains("kernel")) c.kernel = kernel_from_json(j.at("kernel"));
  c.seed = j.value("seed", c.seed);
  if (j.contains("solver")) c.solver = solver_from_json(j.at("solver"));
  c.validate();
  return c;
}

namespace detail {

inline void write_matrix_rowmajor(std::ostream& os, const Matrix& M) {
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) write_f64_le(os, M(r, c));
}

inline Matrix read_matrix_rowmajor(std::istream& is, Eigen::Index rows,
                                   Eigen::Index cols, const std::string& what) {
  Matrix M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = read_f64_le(is);
  if (!is) throw IoError("truncated " + what + " block");
  if (!M.allFinite()) throw IoError("non-finite values in " + what + " block");
  return M;
}

inline void write_sidecar(const std::string& path, const json& j) {
  std::ofstream os(path + ".json");
  if (!os) throw IoError("cannot open sidecar " + path + ".json");
  os << j.dump(2) << '\n';
}

inline json read_sidecar(const std::string& path) {
  std::ifstream is(path + ".json");
  if (!is) throw IoError("cannot open sidecar " + path + ".json");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IoError("bad sidecar " + path + ".json: " + e.what());
  }
}

}  // namespace detail

struct DictionaryProvenance {
  std::uint64_t seed = 0;
  int T = 0;
  KernelSpec kernel;
};

inline void save_dictionary(const std::string& path, const Dictionary& dict,
                            const DictionaryProvenance& prov) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_dictionary: cannot open " + path);
  os.write("KJDL", 4);
  detail::write_u32_le(os, 1u);
  detail::write_u32_le(os, static_cast<std::uint32_t>(dict.dim()));
  detail::write_u32_le(os, static_cast<std::uint32_t>(dict.size()));
  detail::write_matrix_rowmajor(os, dict.atoms);
  if (!os) throw IoError("save_dictionary: write failed for " + path);
  json side;
  side["fingerprint"] = fingerprint_hex(dict.fingerprint());
  side["seed"] = prov.seed;
  side["T"] = prov.T;
  side["kernel"] = kernel_to_json(prov.kernel);
  detail::write_sidecar(path, side);
}

inline Dictionary load_dictionary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_dictionary: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "KJDL")
    throw IoError("load_dictionary: bad magic in " + path);
  if (detail::read_u32_le(is) != 1u)
    throw IoError("load_dictionary: unsupported version in " + path);
  const Eigen::Index n = detail::read_u32_le(is);
  const Eigen::Index d = detail::read_u32_le(is);
  return Dictionary(detail::read_matrix_rowmajor(is, n, d, "atom"));
}

struct SavedModel {
  ModelPair model;
  TrainConfig config;
};

inline void save_model(const std::string& path, const ModelPair& model,
                       const TrainConfig& config) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_model: cannot open " + path);
  os.write("KJDL", 4);
  detail::write_u32_le(os, 1u);
  detail::write_u32_le(os, static_cast<std::uint32_t>(model.dictionary.dim()));
  detail::write_u32_le(os, static_cast<std::uint32_t>(model.dictionary.size()));
  detail::write_matrix_rowmajor(os, model.dictionary.atoms);
  detail::write_u32_le(os, static_cast<std::uint32_t>(model.weights.W.rows()));
  detail::write_u32_le(os, static_cast<std::uint32_t>(model.weights.W.cols()));
  detail::write_matrix_rowmajor(os, model.weights.W);
  if (!os) throw IoError("save_model: write failed for " + path);
  json side;
  side["atoms_fingerprint"] = fingerprint_hex(model.dictionary.fingerprint());
  side["w_fingerprint"] = fingerprint_hex(hash_matrix(model.weights.W));
  side["config"] = train_config_to_json(config);
  detail::write_sidecar(path, side);
}

inline SavedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_model: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "KJDL")
    throw IoError("load_model: bad magic in " + path);
  if (detail::read_u32_le(is) != 1u)
    throw IoError("load_model: unsupported version in " + path);
  const Eigen::Index n = detail::read_u32_le(is);
  const Eigen::Index d = detail::read_u32_le(is);
  SavedModel out;
  out.model.dictionary = Dictionary(detail::read_matrix_rowmajor(is, n, d, "atom"));
  const Eigen::Index C = detail::read_u32_le(is);
  const Eigen::Index d2 = detail::read_u32_le(is);
  if (d2 != d) throw IoError("load_model: classifier width mismatch in " + path);
  out.model.weights.W = detail::read_matrix_rowmajor(is, C, d2, "classifier");
  const json side = detail::read_sidecar(path);
  if (!side.contains("config")) throw IoError("load_model: sidecar missing config");
  try {
    out.config = train_config_from_json(side.at("config"));
  } catch (const json::exception& e) {
    throw IoError(std::string("load_model: bad sidecar config: ") + e.what());
  }
  return out;
}

}  // namespace kjdl

#endif  // KJDL_MODEL_IO_HPP

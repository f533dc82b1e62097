#ifndef KJDL_CLI_HPP
#define KJDL_CLI_HPP

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kjdl/classify.hpp"
#include "kjdl/data_io.hpp"
#include "kjdl/gradcheck.hpp"
#include "kjdl/jsc.hpp"
#include "kjdl/model_io.hpp"
#include "kjdl/task.hpp"
#include "kjdl/unsup.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Batch front-end. One flat JSON config drives every subcommand; each config
// key also exists as a flag that overrides the file. All defaults are echoed
// back into outputs so a run is reproducible from its artifacts.
//
// Method tags name the eight pipeline variants:
//   {sdl|src}-{l1|l12}-{l|k}
// sdl = trained dictionary + linear classifier, src = representation
// baseline over all training pixels; l1 codes the center pixel alone (forces
// S = 1), l12 codes the neighborhood jointly; l forces the linear kernel,
// k uses the configured kernel (Gaussian unless overridden).
//
// Exit codes: 0 ok, 1 audit failure, 2 config error, 3 data error,
// 4 numeric failure.
// ---------------------------------------------------------------------------

struct MethodTag {
  bool src = false;         // representation baseline instead of trained model
  bool joint = true;        // l12 neighborhood coding (else center-only l1)
  bool kernelized = true;   // honor the configured kernel (else linear)
};

inline MethodTag parse_method(const std::string& s) {
  MethodTag tag;
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == '-') {
      parts.push_back(cur);
      cur.clear();
    } else
      cur.push_back(ch);
  }
  parts.push_back(cur);
  if (parts.size() != 3) throw ConfigError("bad method tag: " + s);
  if (parts[0] == "sdl")
    tag.src = false;
  else if (parts[0] == "src")
    tag.src = true;
  else
    throw ConfigError("bad method family in tag: " + s);
  if (parts[1] == "l1")
    tag.joint = false;
  else if (parts[1] == "l12")
    tag.joint = true;
  else
    throw ConfigError("bad prior in method tag: " + s);
  if (parts[2] == "l")
    tag.kernelized = false;
  else if (parts[2] == "k")
    tag.kernelized = true;
  else
    throw ConfigError("bad kernel switch in method tag: " + s);
  return tag;
}

struct RunConfig {
  std::string method = "sdl-l12-k";

  // data
  std::string cube_path;
  std::string labels_path;
  std::vector<int> band_drop;
  double train_fraction = 0.1;
  std::uint64_t seed = 0;

  // model / trainer
  double lambda1 = 0.01;
  double lambda2 = 0.0;
  double nu = 1e-4;
  double rho = 0.1;
  double t0 = 0.0;          // <= 0: auto (T / 10)
  long long T = -1;         // < 0: auto (20 * training-set size)
  int S = 9;
  std::string kernel_kind = "gaussian";
  double sigma = 1.0;
  int degree = 2;
  int atoms_per_class = 5;
  int d = 0;                // 0: atoms_per_class * class count
  long long unsup_T = 500;  // unsupervised warm-up iterations

  // solver
  int max_iters = 20000;
  double kkt_tol = 1e-6;
  double active_tol = 1e-6;
  bool polish = true;

  // outputs / inputs per command
  std::string model_out = "model.kjdl";
  std::string init_model_out;
  std::string log_out;
  std::string model_in;
  std::string pred_out;
  std::string report_out;

  // cross-validation
  int cv_folds = 5;
  long long cv_T = 200;
  std::vector<double> cv_lambda1 = {0.001, 0.01, 0.1};
  std::vector<double> cv_nu = {1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  std::vector<double> cv_sigma = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
  std::string cv_out;

  // synthetic benchmark
  int synth_classes = 3;
  int synth_bands = 20;
  int pixels_per_class = 200;
  double noise_sigma = 0.25;
  std::string layout = "stripes";
  std::string cube_out = "synth.kjhc";
  std::string labels_out = "synth.kjhl";

  // gradient audit
  int trials = 20;
  double tol = 1e-4;
  double fd_step = 1e-5;
  bool corrupt_sign = false;  // negative-control hook for the audit
};

inline json run_config_to_json(const RunConfig& c) {
  json j;
  j["method"] = c.method;
  j["cube"] = c.cube_path;
  j["labels"] = c.labels_path;
  j["band_drop"] = c.band_drop;
  j["train_fraction"] = c.train_fraction;
  j["seed"] = c.seed;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["nu"] = c.nu;
  j["rho"] = c.rho;
  j["t0"] = c.t0;
  j["T"] = c.T;
  j["S"] = c.S;
  j["kernel_kind"] = c.kernel_kind;
  j["sigma"] = c.sigma;
  j["degree"] = c.degree;
  j["atoms_per_class"] = c.atoms_per_class;
  j["d"] = c.d;
  j["unsup_T"] = c.unsup_T;
  j["max_iters"] = c.max_iters;
  j["kkt_tol"] = c.kkt_tol;
  j["active_tol"] = c.active_tol;
  j["polish"] = c.polish;
  j["model_out"] = c.model_out;
  j["init_model_out"] = c.init_model_out;
  j["log_out"] = c.log_out;
  j["model_in"] = c.model_in;
  j["pred_out"] = c.pred_out;
  j["report_out"] = c.report_out;
  j["cv_folds"] = c.cv_folds;
  j["cv_T"] = c.cv_T;
  j["cv_lambda1"] = c.cv_lambda1;
  j["cv_nu"] = c.cv_nu;
  j["cv_sigma"] = c.cv_sigma;
  j["cv_out"] = c.cv_out;
  j["synth_classes"] = c.synth_classes;
  j["synth_bands"] = c.synth_bands;
  j["pixels_per_class"] = c.pixels_per_class;
  j["noise_sigma"] = c.noise_sigma;
  j["layout"] = c.layout;
  j["cube_out"] = c.cube_out;
  j["labels_out"] = c.labels_out;
  j["trials"] = c.trials;
  j["tol"] = c.tol;
  j["fd_step"] = c.fd_step;
  j["corrupt_sign"] = c.corrupt_sign;
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    c.method = j.value("method", c.method);
    c.cube_path = j.value("cube", c.cube_path);
    c.labels_path = j.value("labels", c.labels_path);
    c.band_drop = j.value("band_drop", c.band_drop);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.seed = j.value("seed", c.seed);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.nu = j.value("nu", c.nu);
    c.rho = j.value("rho", c.rho);
    c.t0 = j.value("t0", c.t0);
    c.T = j.value("T", c.T);
    c.S = j.value("S", c.S);
    c.kernel_kind = j.value("kernel_kind", c.kernel_kind);
    c.sigma = j.value("sigma", c.sigma);
    c.degree = j.value("degree", c.degree);
    c.atoms_per_class = j.value("atoms_per_class", c.atoms_per_class);
    c.d = j.value("d", c.d);
    c.unsup_T = j.value("unsup_T", c.unsup_T);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.kkt_tol = j.value("kkt_tol", c.kkt_tol);
    c.active_tol = j.value("active_tol", c.active_tol);
    c.polish = j.value("polish", c.polish);
    c.model_out = j.value("model_out", c.model_out);
    c.init_model_out = j.value("init_model_out", c.init_model_out);
    c.log_out = j.value("log_out", c.log_out);
    c.model_in = j.value("model_in", c.model_in);
    c.pred_out = j.value("pred_out", c.pred_out);
    c.report_out = j.value("report_out", c.report_out);
    c.cv_folds = j.value("cv_folds", c.cv_folds);
    c.cv_T = j.value("cv_T", c.cv_T);
    c.cv_lambda1 = j.value("cv_lambda1", c.cv_lambda1);
    c.cv_nu = j.value("cv_nu", c.cv_nu);
    c.cv_sigma = j.value("cv_sigma", c.cv_sigma);
    c.cv_out = j.value("cv_out", c.cv_out);
    c.synth_classes = j.value("synth_classes", c.synth_classes);
    c.synth_bands = j.value("synth_bands", c.synth_bands);
    c.pixels_per_class = j.value("pixels_per_class", c.pixels_per_class);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.layout = j.value("layout", c.layout);
    c.cube_out = j.value("cube_out", c.cube_out);
    c.labels_out = j.value("labels_out", c.labels_out);
    c.trials = j.value("trials", c.trials);
    c.tol = j.value("tol", c.tol);
    c.fd_step = j.value("fd_step", c.fd_step);
    c.corrupt_sign = j.value("corrupt_sign", c.corrupt_sign);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

namespace detail {

struct ResolvedMethod {
  MethodTag tag;
  KernelSpec kernel;
  Eigen::Index S = 1;
};

inline ResolvedMethod resolve_method(const RunConfig& c) {
  ResolvedMethod r;
  r.tag = parse_method(c.method);
  if (r.tag.kernelized) {
    r.kernel.kind = kernel_kind_from_name(c.kernel_kind);
    r.kernel.sigma = c.sigma;
    r.kernel.degree = c.degree;
  } else {
    r.kernel.kind = KernelKind::Linear;
  }
  r.kernel.validate();
  r.S = r.tag.joint ? c.S : 1;
  if (r.S < 1) throw ConfigError("S must be >= 1");
  return r;
}

inline SolverOptions resolve_solver(const RunConfig& c) {
  SolverOptions o;
  o.max_iters = c.max_iters;
  o.kkt_tol = c.kkt_tol;
  o.active_tol = c.active_tol;
  o.polish = c.polish;
  return o;
}

inline IndexList to_band_list(const std::vector<int>& v) {
  IndexList out;
  for (int b : v) out.push_back(b);
  return out;
}

struct LoadedData {
  HsiCube cube;
  LabelMap labels;
  int classes = 0;
  IndexList train_ids, test_ids;
};

inline LoadedData load_and_split(const RunConfig& c) {
  if (c.cube_path.empty() || c.labels_path.empty())
    throw ConfigError("cube and labels paths are required");
  LoadedData data;
  data.cube = load_cube(c.cube_path, to_band_list(c.band_drop));
  data.labels = load_labels(c.labels_path);
  if (data.cube.height != data.labels.height || data.cube.width != data.labels.width)
    throw InvalidInput("cube and label map dimensions differ");
  data.classes = class_count(data.labels);
  auto parts = split(data.labels, c.train_fraction, c.seed);
  data.train_ids = std::move(parts.first);
  data.test_ids = std::move(parts.second);
  return data;
}

inline Matrix gather_pixels(const HsiCube& cube, const IndexList& ids) {
  Matrix X(cube.bands, static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i)
    X.col(static_cast<Eigen::Index>(i)) = cube.values.col(ids[i]);
  return X;
}

inline std::vector<int> gather_labels(const LabelMap& labels, const IndexList& ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (Eigen::Index p : ids) out.push_back(labels.grid[static_cast<std::size_t>(p)]);
  return out;
}

inline void print_eval_table(std::ostream& os, const EvalReport& rep) {
  char buf[64];
  os << "class   accuracy(%)\n";
  for (Eigen::Index c = 0; c < rep.per_class_accuracy.size(); ++c) {
    if (rep.per_class_accuracy(c) < 0.0) {
      std::snprintf(buf, sizeof buf, "%-7d %s", static_cast<int>(c + 1), "absent");
    } else {
      std::snprintf(buf, sizeof buf, "%-7d %.2f", static_cast<int>(c + 1),
                    100.0 * rep.per_class_accuracy(c));
    }
    os << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%-7s %.2f", "OA", 100.0 * rep.overall_accuracy);
  os << buf << '\n';
  std::snprintf(buf, sizeof buf, "%-7s %.2f", "AA", 100.0 * rep.average_accuracy);
  os << buf << '\n';
}

inline json eval_report_to_json(const EvalReport& rep) {
  json j;
  j["overall_accuracy"] = rep.overall_accuracy;
  j["average_accuracy"] = rep.average_accuracy;
  std::vector<double> pc(rep.per_class_accuracy.data(),
                         rep.per_class_accuracy.data() + rep.per_class_accuracy.size());
  j["per_class_accuracy"] = pc;
  std::vector<std::vector<int>> conf;
  for (Eigen::Index r = 0; r < rep.confusion.rows(); ++r) {
    std::vector<int> row;
    for (Eigen::Index c = 0; c < rep.confusion.cols(); ++c)
      row.push_back(rep.confusion(r, c));
    conf.push_back(std::move(row));
  }
  j["confusion"] = conf;
  return j;
}

}  // namespace detail

// Full training pipeline: warm-start the dictionary on reconstruction alone,
// fit the classifier ridge on the frozen codes, then run the task-driven
// refinement. Returns the trained model; optionally also hands back the
// initialization for before/after comparisons.
inline ModelPair train_pipeline(const HsiCube& cube, const LabelMap& labels,
                                const IndexList& train_ids, const RunConfig& cfg,
                                ModelPair* init_out = nullptr) {
  const detail::ResolvedMethod method = detail::resolve_method(cfg);
  if (method.tag.src)
    throw ConfigError("method " + cfg.method +
                      " has no training stage (the baseline codes over raw "
                      "training pixels); run eval directly");
  const int C = class_count(labels);
  const auto N = static_cast<long long>(train_ids.size());
  if (N < 1) throw InvalidInput("empty training split");

  const Eigen::Index d =
      cfg.d > 0 ? cfg.d : static_cast<Eigen::Index>(cfg.atoms_per_class) * C;
  const long long T = cfg.T >= 0 ? cfg.T : 20 * N;
  const double t0 = cfg.t0 > 0.0 ? cfg.t0 : std::max(1.0, static_cast<double>(T) / 10.0);
  const SolverOptions solver = detail::resolve_solver(cfg);

  const Matrix X_train = detail::gather_pixels(cube, train_ids);

  Dictionary dict = train_unsupervised(X_train, d, cfg.lambda1, cfg.lambda2, cfg.rho,
                                       t0, static_cast<int>(cfg.unsup_T), method.kernel,
                                       cfg.seed, solver);

  const TrainingSet tset = make_training_set(cube, labels, train_ids, method.S);

  // Codes of every training neighborhood (center column) under the frozen
  // initial dictionary, for the ridge fit of W.
  Matrix codes(d, static_cast<Eigen::Index>(tset.samples.size()));
  Matrix Y = Matrix::Zero(C, static_cast<Eigen::Index>(tset.samples.size()));
  for (std::size_t i = 0; i < tset.samples.size(); ++i) {
    const JscProblem p = make_jsc_problem(method.kernel, dict, tset.samples[i].pixels,
                                          cfg.lambda1, cfg.lambda2);
    codes.col(static_cast<Eigen::Index>(i)) = solve_jsc(p, solver).codes.col(0);
    Y.col(static_cast<Eigen::Index>(i)) = tset.samples[i].label;
  }
  const double nu_init = cfg.nu > 0.0 ? cfg.nu : 1e-8;
  ModelPair init;
  init.dictionary = dict;
  init.weights = init_classifier(codes, Y, nu_init);
  if (init_out) *init_out = init;

  TrainConfig tc;
  tc.lambda1 = cfg.lambda1;
  tc.lambda2 = cfg.lambda2;
  tc.nu = cfg.nu;
  tc.rho = cfg.rho;
  tc.t0 = t0;
  tc.T = static_cast<int>(T);
  tc.S = method.S;
  tc.kernel = method.kernel;
  tc.seed = cfg.seed;
  tc.solver = solver;
  return train(tset, init, tc);
}

inline TrainConfig echo_train_config(const RunConfig& cfg, const HsiCube& cube,
                                     const LabelMap& labels,
                                     const IndexList& train_ids) {
  const detail::ResolvedMethod method = detail::resolve_method(cfg);
  const auto N = static_cast<long long>(train_ids.size());
  const long long T = cfg.T >= 0 ? cfg.T : 20 * N;
  TrainConfig tc;
  tc.lambda1 = cfg.lambda1;
  tc.lambda2 = cfg.lambda2;
  tc.nu = cfg.nu;
  tc.rho = cfg.rho;
  tc.t0 = cfg.t0 > 0.0 ? cfg.t0 : std::max(1.0, static_cast<double>(T) / 10.0);
  tc.T = static_cast<int>(T);
  tc.S = method.S;
  tc.kernel = method.kernel;
  tc.seed = cfg.seed;
  tc.solver = detail::resolve_solver(cfg);
  (void)cube;
  (void)labels;
  return tc;
}

inline int run_train(const RunConfig& cfg, std::ostream& os) {
  detail::resolve_method(cfg);  // reject bad method/kernel configs before any IO
  detail::LoadedData data = detail::load_and_split(cfg);
  os << "training " << cfg.method << " on " << data.train_ids.size()
     << " labeled pixels (" << data.classes << " classes)\n";
  ModelPair init;
  const ModelPair model = train_pipeline(data.cube, data.labels, data.train_ids, cfg,
                                         &init);
  const TrainConfig tc = echo_train_config(cfg, data.cube, data.labels, data.train_ids);
  save_model(cfg.model_out, model, tc);
  os << "model written to " << cfg.model_out << '\n';
  if (!cfg.init_model_out.empty()) {
    save_model(cfg.init_model_out, init, tc);
    os << "initialization written to " << cfg.init_model_out << '\n';
  }
  if (!cfg.log_out.empty()) {
    std::ofstream log(cfg.log_out);
    if (!log) throw IoError("cannot open " + cfg.log_out);
    write_train_log(log, model.train_log);
    os << "train log written to " << cfg.log_out << '\n';
  }
  return 0;
}

inline int run_eval(const RunConfig& cfg, std::ostream& os) {
  const detail::ResolvedMethod method = detail::resolve_method(cfg);
  if (!method.tag.src && cfg.model_in.empty())
    throw ConfigError("eval of a trained method needs model_in");
  detail::LoadedData data = detail::load_and_split(cfg);
  const std::vector<int> truth = detail::gather_labels(data.labels, data.test_ids);

  std::vector<int> preds;
  std::vector<Vector> scores;
  if (method.tag.src) {
    LabeledDictionary ld;
    ld.atoms = detail::gather_pixels(data.cube, data.train_ids);
    ld.atom_labels = detail::gather_labels(data.labels, data.train_ids);
    ld.check();
    const SolverOptions solver = detail::resolve_solver(cfg);
    const SrcPrior prior = method.tag.joint ? SrcPrior::L12 : SrcPrior::L1;
    for (Eigen::Index p : data.test_ids) {
      const Matrix nb = neighborhood(data.cube, p / data.cube.width,
                                     p % data.cube.width, method.S);
      preds.push_back(predict_src(ld, nb, method.kernel, prior, cfg.lambda1,
                                  cfg.lambda2, solver));
    }
  } else {
    const SavedModel saved = load_model(cfg.model_in);
    if (saved.model.dictionary.dim() != data.cube.bands)
      throw InvalidInput("model spectral dimension does not match the cube");
    for (Eigen::Index p : data.test_ids) {
      const Matrix nb = neighborhood(data.cube, p / data.cube.width,
                                     p % data.cube.width, saved.config.S);
      const SdlPrediction pr =
          predict_sdl(saved.model, nb, saved.config.kernel, saved.config.lambda1,
                      saved.config.lambda2, saved.config.solver);
      preds.push_back(pr.label);
      scores.push_back(pr.scores);
    }
  }

  const EvalReport rep = evaluate(preds, truth);
  detail::print_eval_table(os, rep);
  if (!cfg.pred_out.empty()) {
    std::ofstream pf(cfg.pred_out);
    if (!pf) throw IoError("cannot open " + cfg.pred_out);
    write_predictions(pf, truth, preds, scores);
  }
  if (!cfg.report_out.empty()) {
    std::ofstream rf(cfg.report_out);
    if (!rf) throw IoError("cannot open " + cfg.report_out);
    rf << detail::eval_report_to_json(rep).dump(2) << '\n';
  }
  return 0;
}

namespace detail {

// Stratified fold assignment over the given labeled pixel ids; every fold
// must receive at least one pixel of every class.
inline std::vector<int> assign_folds(const LabelMap& labels, const IndexList& ids,
                                     int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cv_folds must be >= 2");
  const int C = class_count(labels);
  std::vector<int> fold_of(ids.size(), -1);
  auto rng = make_rng(seed, stream::kCvFolds);
  for (int c = 1; c <= C; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (labels.grid[static_cast<std::size_t>(ids[i])] == c) members.push_back(i);
    if (static_cast<int>(members.size()) < folds)
      throw ConfigError("class " + std::to_string(c) + " has only " +
                        std::to_string(members.size()) +
                        " training pixels; reduce cv_folds");
    // Fisher-Yates then round-robin.
    for (std::size_t i = members.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i, rng);
      std::swap(members[i - 1], members[j]);
    }
    for (std::size_t i = 0; i < members.size(); ++i)
      fold_of[members[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

}  // namespace detail

struct CvCell {
  double lambda1 = 0.0, nu = 0.0, sigma = 0.0;
  double mean_oa = 0.0;
};

struct CvResult {
  std::vector<CvCell> cells;
  CvCell best;
};

// Grid search by k-fold cross validation on the training split only. Cells
// are visited in ascending (lambda1, nu, sigma) order and ties keep the
// earliest cell, so ties resolve to the smallest lambda1, then nu, then
// sigma. Linear methods collapse the sigma axis; the representation baseline
// collapses the nu axis (it has no classifier ridge).
inline CvResult run_cv_grid(const HsiCube& cube, const LabelMap& labels,
                            const IndexList& train_ids, const RunConfig& cfg,
                            std::ostream& os) {
  const detail::ResolvedMethod method = detail::resolve_method(cfg);
  if (cfg.cv_lambda1.empty() || cfg.cv_nu.empty() || cfg.cv_sigma.empty())
    throw ConfigError("cross-validation grids must be non-empty");

  std::vector<double> grid_l1 = cfg.cv_lambda1;
  std::vector<double> grid_nu = method.tag.src ? std::vector<double>{0.0} : cfg.cv_nu;
  std::vector<double> grid_sigma = method.kernel.kind == KernelKind::Gaussian
                                       ? cfg.cv_sigma
                                       : std::vector<double>{0.0};
  std::sort(grid_l1.begin(), grid_l1.end());
  std::sort(grid_nu.begin(), grid_nu.end());
  std::sort(grid_sigma.begin(), grid_sigma.end());

  const std::vector<int> fold_of =
      detail::assign_folds(labels, train_ids, cfg.cv_folds, cfg.seed);

  CvResult result;
  bool have_best = false;
  for (double l1 : grid_l1)
    for (double nu : grid_nu)
      for (double sg : grid_sigma) {
        RunConfig cell_cfg = cfg;
        cell_cfg.lambda1 = l1;
        if (!method.tag.src) cell_cfg.nu = nu;
        if (method.kernel.kind == KernelKind::Gaussian) cell_cfg.sigma = sg;
        cell_cfg.T = cfg.cv_T;

        double oa_sum = 0.0;
        for (int f = 0; f < cfg.cv_folds; ++f) {
          IndexList fit_ids, held_ids;
          for (std::size_t i = 0; i < train_ids.size(); ++i)
            (fold_of[i] == f ? held_ids : fit_ids).push_back(train_ids[i]);

          std::vector<int> preds;
          const std::vector<int> truth = detail::gather_labels(labels, held_ids);
          const detail::ResolvedMethod m2 = detail::resolve_method(cell_cfg);
          if (method.tag.src) {
            LabeledDictionary ld;
            ld.atoms = detail::gather_pixels(cube, fit_ids);
            ld.atom_labels = detail::gather_labels(labels, fit_ids);
            ld.check();
            const SrcPrior prior = m2.tag.joint ? SrcPrior::L12 : SrcPrior::L1;
            for (Eigen::Index p : held_ids) {
              const Matrix nb =
                  neighborhood(cube, p / cube.width, p % cube.width, m2.S);
              preds.push_back(predict_src(ld, nb, m2.kernel, prior, cell_cfg.lambda1,
                                          cell_cfg.lambda2,
                                          detail::resolve_solver(cell_cfg)));
            }
          } else {
            const ModelPair model = train_pipeline(cube, labels, fit_ids, cell_cfg);
            for (Eigen::Index p : held_ids) {
              const Matrix nb =
                  neighborhood(cube, p / cube.width, p % cube.width, m2.S);
              preds.push_back(predict_sdl(model, nb, m2.kernel, cell_cfg.lambda1,
                                          cell_cfg.lambda2,
                                          detail::resolve_solver(cell_cfg))
                                  .label);
            }
          }
          oa_sum += evaluate(preds, truth).overall_accuracy;
        }

        CvCell cell;
        cell.lambda1 = l1;
        cell.nu = nu;
        cell.sigma = sg;
        cell.mean_oa = oa_sum / cfg.cv_folds;
        result.cells.push_back(cell);
        char buf[128];
        std::snprintf(buf, sizeof buf, "cell l1=%-8g nu=%-8g sigma=%-6g mean OA %.4f",
                      l1, nu, sg, cell.mean_oa);
        os << buf << '\n';
        if (!have_best || cell.mean_oa > result.best.mean_oa) {
          result.best = cell;
          have_best = true;
        }
      }
  return result;
}

inline int run_cv(const RunConfig& cfg, std::ostream& os) {
  detail::resolve_method(cfg);
  detail::LoadedData data = detail::load_and_split(cfg);
  const CvResult result = run_cv_grid(data.cube, data.labels, data.train_ids, cfg, os);
  char buf[128];
  std::snprintf(buf, sizeof buf, "best: lambda1=%g nu=%g sigma=%g (mean OA %.4f)",
                result.best.lambda1, result.best.nu, result.best.sigma,
                result.best.mean_oa);
  os << buf << '\n';
  if (!cfg.cv_out.empty()) {
    json j;
    j["best"] = {{"lambda1", result.best.lambda1},
                 {"nu", result.best.nu},
                 {"sigma", result.best.sigma},
                 {"mean_oa", result.best.mean_oa}};
    json cells = json::array();
    for (const CvCell& c : result.cells)
      cells.push_back({{"lambda1", c.lambda1},
                       {"nu", c.nu},
                       {"sigma", c.sigma},
                       {"mean_oa", c.mean_oa}});
    j["cells"] = cells;
    std::ofstream of(cfg.cv_out);
    if (!of) throw IoError("cannot open " + cfg.cv_out);
    of << j.dump(2) << '\n';
  }
  return 0;
}

inline int run_gradcheck_cmd(const RunConfig& cfg, std::ostream& os) {
  GradCheckOptions opts;
  opts.trials = cfg.trials;
  opts.seed = cfg.seed;
  opts.tol = cfg.tol;
  opts.fd_step = cfg.fd_step;
  opts.corrupt_sign = cfg.corrupt_sign;
  const GradCheckReport report = run_gradcheck(opts);
  print_gradcheck_report(os, report);
  return report.all_passed ? 0 : 1;
}

inline int run_synth(const RunConfig& cfg, std::ostream& os) {
  SpatialLayout layout;
  if (cfg.layout == "stripes")
    layout = SpatialLayout::Stripes;
  else if (cfg.layout == "blocks")
    layout = SpatialLayout::Blocks;
  else
    throw ConfigError("layout must be 'stripes' or 'blocks'");
  auto [cube, labels] = synth_benchmark(cfg.synth_classes, cfg.synth_bands,
                                        cfg.pixels_per_class, cfg.noise_sigma, layout,
                                        cfg.seed);
  save_cube(cfg.cube_out, cube);
  save_labels(cfg.labels_out, labels);
  os << "synthetic scene " << cube.height << "x" << cube.width << "x" << cube.bands
     << " written to " << cfg.cube_out << " / " << cfg.labels_out << '\n';
  return 0;
}

}  // namespace kjdl

#endif  // KJDL_CLI_HPP

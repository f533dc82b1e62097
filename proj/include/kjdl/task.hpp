#ifndef KJDL_TASK_HPP
#define KJDL_TASK_HPP

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "kjdl/common.hpp"
#include "kjdl/jsc.hpp"
#include "kjdl/kernel.hpp"
#include "kjdl/model.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Task-driven trainer: stochastic gradient descent on the classification loss
// as a function of (D, W) THROUGH the joint sparse coding solution. Per
// sample: code the neighborhood, detect the shared support, solve one linear
// system for the sensitivity vector beta (implicit differentiation of the
// fixed-support stationarity conditions), then take a projected gradient
// step on both the dictionary and the classifier.
//
// Reductions that feed the model state are written as explicit ascending-
// index loops rather than matrix products: the S = 1 / linear-kernel
// configuration of this trainer is required to reproduce an independently
// written plain task-driven trainer float for float, which rules out any
// backend-dependent summation order. Build with FP contraction disabled.
// ---------------------------------------------------------------------------

// Added to the system diagonal of the beta solve when lambda2 = 0, which the
// experimental regime uses even though uniqueness of beta wants lambda2 > 0.
inline constexpr double kPdGuardEpsilon = 1e-8;

struct TrainConfig {
  double lambda1 = 0.01;
  double lambda2 = 0.0;
  double nu = 1e-4;      // classifier ridge weight
  double rho = 0.1;      // base learning rate
  double t0 = 1.0;       // iterations before the 1/t decay engages
  int T = 0;             // SGD iteration count
  Eigen::Index S = 9;    // neighborhood size
  KernelSpec kernel;
  std::uint64_t seed = 0;
  SolverOptions solver;

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || nu < 0.0)
      throw InvalidInput("TrainConfig: negative regularization weight");
    if (!(rho > 0.0)) throw InvalidInput("TrainConfig: rho must be positive");
    if (!(t0 > 0.0)) throw InvalidInput("TrainConfig: t0 must be positive");
    if (T < 0) throw InvalidInput("TrainConfig: negative iteration count");
    if (S < 1) throw InvalidInput("TrainConfig: neighborhood size must be >= 1");
    kernel.validate();
  }
};

struct NeighborhoodSample {
  Matrix pixels;  // n x S, column 0 = the center pixel
  Vector label;   // one-hot over C classes

  void check() const {
    if (pixels.cols() < 1) throw InvalidInput("NeighborhoodSample: no pixels");
    int ones = 0;
    for (Eigen::Index c = 0; c < label.size(); ++c) {
      if (label(c) == 1.0)
        ++ones;
      else if (label(c) != 0.0)
        throw InvalidInput("NeighborhoodSample: label not one-hot");
    }
    if (ones != 1) throw InvalidInput("NeighborhoodSample: label not one-hot");
  }
};

struct TrainingSet {
  std::vector<NeighborhoodSample> samples;
  Eigen::Index class_count = 0;
};

struct TrainRecord {
  int t = 0;
  double step = 0.0;
  Eigen::Index active_count = 0;
  double sample_loss = 0.0;
  bool pd_guard = false;  // diagonal guard applied in the beta solve
};

struct ModelPair {
  Dictionary dictionary;
  ClassifierWeights weights;
  std::vector<TrainRecord> train_log;
};

inline double supervised_loss(const Vector& y, const ClassifierWeights& w,
                              const Vector& alpha) {
  if (w.W.rows() != y.size() || w.W.cols() != alpha.size())
    throw InvalidInput("supervised_loss: dimension mismatch");
  return 0.5 * (y - w.W * alpha).squaredNorm();
}

// Block-diagonal curvature of the row-norm penalty: one S x S block per
// supplied row, in the given order. Rows must be nonzero (callers pass only
// rows of the active set).
inline Matrix assemble_delta(const Matrix& active_rows) {
  const Eigen::Index m = active_rows.rows();
  const Eigen::Index S = active_rows.cols();
  Matrix Delta = Matrix::Zero(m * S, m * S);
  for (Eigen::Index i = 0; i < m; ++i)
    Delta.block(i * S, i * S, S, S) = row_curvature_block(active_rows.row(i));
  return Delta;
}

// System matrix of the sensitivity solve, atom-major blocks: the Kronecker
// lift of the restricted Gram plus the penalty curvature. Symmetric, and
// positive definite whenever lambda2 > 0.
inline Matrix sensitivity_matrix(const Matrix& gram_DLambda, const Matrix& Delta,
                                 double lambda1, double lambda2, Eigen::Index S) {
  const Eigen::Index m = gram_DLambda.rows();
  if (gram_DLambda.cols() != m)
    throw InvalidInput("sensitivity_matrix: restricted Gram not square");
  if (Delta.rows() != m * S || Delta.cols() != m * S)
    throw InvalidInput("sensitivity_matrix: Delta has wrong shape");
  Matrix H = Matrix::Zero(m * S, m * S);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      H.block(i * S, j * S, S, S).diagonal().setConstant(gram_DLambda(i, j));
  H += lambda1 * Delta;
  H.diagonal().array() += lambda2;
  return H;
}

// Sensitivity system of the fixed-support stationarity conditions. Unknowns
// are ordered atom-major: S consecutive entries per active atom. The solved
// vector is scattered into a full d*S beta, pixel-major (entry for atom j,
// pixel s lands at j + s*d), zero off the active set.
inline Vector solve_beta(const Matrix& gram_DLambda, const Matrix& Delta,
                         double lambda1, double lambda2, const Matrix& W_Lambda,
                         const Vector& alpha_center, const Vector& y,
                         const IndexList& Lambda, Eigen::Index d, Eigen::Index S,
                         bool* pd_guard_applied = nullptr) {
  if (pd_guard_applied) *pd_guard_applied = false;
  if (Lambda.empty()) return Vector::Zero(d * S);

  const Eigen::Index m = static_cast<Eigen::Index>(Lambda.size());
  const Eigen::Index C = y.size();
  if (W_Lambda.rows() != C || W_Lambda.cols() != m)
    throw InvalidInput("solve_beta: restricted classifier has wrong shape");
  if (alpha_center.size() != d) throw InvalidInput("solve_beta: alpha has wrong length");

  Matrix H = sensitivity_matrix(gram_DLambda, Delta, lambda1, lambda2, S);
  if (lambda2 == 0.0) {
    H.diagonal().array() += kPdGuardEpsilon;
    if (pd_guard_applied) *pd_guard_applied = true;
  }

  // Classifier residual on the center pixel, via the active columns only
  // (alpha vanishes off the support). Ascending-index accumulation.
  Vector r(C);
  for (Eigen::Index c = 0; c < C; ++c) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      acc += W_Lambda(c, i) * alpha_center(Lambda[i]);
    r(c) = acc - y(c);
  }

  // Right-hand side: per active atom, the loss only feels pixel 0, so each
  // S-block is (w_i . r, 0, ..., 0).
  Vector g = Vector::Zero(m * S);
  for (Eigen::Index i = 0; i < m; ++i) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) acc += W_Lambda(c, i) * r(c);
    g(i * S) = acc;
  }

  Eigen::LLT<Matrix> llt(H);
  if (llt.info() != Eigen::Success) {
    const double lam_min =
        Eigen::SelfAdjointEigenSolver<Matrix>(H, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    throw NumericError(
        "solve_beta: sensitivity system is not positive definite (min eigenvalue ~ " +
        std::to_string(lam_min) + "); increase lambda2");
  }
  const Vector x = llt.solve(g);

  Vector beta = Vector::Zero(d * S);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index s = 0; s < S; ++s) beta(Lambda[i] + s * d) = x(i * S + s);
  return beta;
}

// The flattening convention beta is read back with. The solver scatters
// pixel-major (see solve_beta); PixelMajor is therefore the self-consistent
// reading, and the finite-difference audit confirms it reproduces the true
// gradient. AtomMajor is the competing reading of the update formula's index
// pattern; it survives only as the documented loser inside the test suite
// (the two coincide at S = 1).
enum class BetaLayout { PixelMajor, AtomMajor };

namespace detail {

inline Matrix unpack_beta(const Vector& beta, Eigen::Index d, Eigen::Index S,
                          BetaLayout layout) {
  if (beta.size() != d * S) throw InvalidInput("unpack_beta: wrong length");
  Matrix B(d, S);
  for (Eigen::Index s = 0; s < S; ++s)
    for (Eigen::Index k = 0; k < d; ++k)
      B(k, s) = layout == BetaLayout::PixelMajor ? beta(k + s * d) : beta(s + k * S);
  return B;
}

// Classifier residual on the center pixel, full-width ascending accumulation.
inline Vector center_residual(const Matrix& W, const Matrix& codes,
                              const Vector& label) {
  Vector rw(W.rows());
  for (Eigen::Index c = 0; c < W.rows(); ++c) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) acc += W(c, j) * codes(j, 0);
    rw(c) = acc - label(c);
  }
  return rw;
}

// Gradient of 1/2 ||y - W alpha||^2 + nu/2 ||W||_F^2 in W.
inline Matrix classifier_gradient(const Matrix& W, const Vector& rw,
                                  const Matrix& codes, double nu) {
  Matrix Gw(W.rows(), W.cols());
  for (Eigen::Index c = 0; c < W.rows(); ++c)
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      Gw(c, j) = rw(c) * codes(j, 0) + nu * W(c, j);
  return Gw;
}

// Dictionary gradient of the sampled loss, accumulated column by column over
// the active set (it vanishes off the support, whose atoms are the only ones
// the restricted coding problem sees). For atom k:
//   sum_s B(k,s) * [ k'(x^s, d_k) - sum_m A(m,s) k'(d_m, d_k) ]
// - sum_s A(k,s) * [ sum_m B(m,s) k'(d_m, d_k) ].
inline Matrix dictionary_gradient(const Matrix& atoms, const NeighborhoodSample& sample,
                                  const Matrix& codes, const IndexList& Lambda,
                                  const Matrix& B, const KernelSpec& spec) {
  const Eigen::Index n = atoms.rows();
  const Eigen::Index S = codes.cols();
  Matrix G = Matrix::Zero(n, atoms.cols());
  for (const Eigen::Index k : Lambda) {
    std::vector<Vector> gdk(Lambda.size());
    for (std::size_t mi = 0; mi < Lambda.size(); ++mi)
      gdk[mi] = grad2(spec, atoms.col(Lambda[mi]), atoms.col(k));
    for (Eigen::Index s = 0; s < S; ++s) {
      if (B(k, s) != 0.0) {
        Vector v = grad2(spec, sample.pixels.col(s), atoms.col(k));
        for (std::size_t mi = 0; mi < Lambda.size(); ++mi)
          v -= codes(Lambda[mi], s) * gdk[mi];
        G.col(k) += B(k, s) * v;
      }
      if (codes(k, s) != 0.0) {
        Vector u = Vector::Zero(n);
        for (std::size_t mi = 0; mi < Lambda.size(); ++mi)
          u += B(Lambda[mi], s) * gdk[mi];
        G.col(k) -= codes(k, s) * u;
      }
    }
  }
  return G;
}

// In-place projected gradient step on (atoms, W). All reductions are
// ascending-index scalar loops; see the header comment.
inline void apply_gradient_step(Matrix& atoms, Matrix& W,
                                const NeighborhoodSample& sample,
                                const Matrix& codes, const IndexList& Lambda,
                                const Vector& beta, double step,
                                const KernelSpec& spec, double nu,
                                BetaLayout layout) {
  const Matrix B = unpack_beta(beta, atoms.cols(), codes.cols(), layout);
  const Vector rw = center_residual(W, codes, sample.label);
  const Matrix Gw = classifier_gradient(W, rw, codes, nu);
  const Matrix G = dictionary_gradient(atoms, sample, codes, Lambda, B, spec);

  for (Eigen::Index c = 0; c < W.rows(); ++c)
    for (Eigen::Index j = 0; j < W.cols(); ++j) W(c, j) = W(c, j) - step * Gw(c, j);

  atoms -= step * G;
  project_columns_unit_ball(atoms);
}

}  // namespace detail

// One projected gradient step from an explicit (sample, code, beta) triple.
inline ModelPair gradient_step(const ModelPair& model, const NeighborhoodSample& sample,
                               const JointSparseCode& code, const Vector& beta,
                               double step, const TrainConfig& config,
                               BetaLayout layout = BetaLayout::PixelMajor) {
  if (!(step >= 0.0)) throw InvalidInput("gradient_step: negative step");
  ModelPair out = model;
  detail::apply_gradient_step(out.dictionary.atoms, out.weights.W, sample, code.codes,
                              code.active_set, beta, step, config.kernel, config.nu,
                              layout);
  return out;
}

inline double learning_rate(const TrainConfig& config, int t) {
  return std::min(config.rho, config.rho * config.t0 / static_cast<double>(t));
}

inline ModelPair train(const TrainingSet& data, const ModelPair& init,
                       const TrainConfig& config) {
  config.validate();
  if (data.samples.empty()) throw InvalidInput("train: empty training set");
  init.dictionary.check();
  const Eigen::Index d = init.dictionary.size();
  if (init.weights.W.cols() != d) throw InvalidInput("train: W width != atom count");
  if (!init.weights.W.allFinite()) throw InvalidInput("train: non-finite W");

  Matrix atoms = init.dictionary.atoms;
  Matrix W = init.weights.W;
  std::vector<TrainRecord> log;
  log.reserve(static_cast<std::size_t>(config.T));

  auto rng = make_rng(config.seed, stream::kTaskDraw);

  for (int t = 1; t <= config.T; ++t) {
    try {
      const std::size_t pick = uniform_index(data.samples.size(), rng);
      const NeighborhoodSample& sample = data.samples[pick];
      sample.check();
      if (sample.pixels.cols() != config.S)
        throw InvalidInput("sample has wrong neighborhood size");
      if (sample.pixels.rows() != atoms.rows())
        throw InvalidInput("sample has wrong spectral dimension");

      Dictionary dict_view(atoms);
      const JscProblem problem = make_jsc_problem(config.kernel, dict_view,
                                                  sample.pixels, config.lambda1,
                                                  config.lambda2);
      const JointSparseCode code = solve_jsc(problem, config.solver);
      const IndexList& Lambda = code.active_set;

      TrainRecord rec;
      rec.t = t;
      rec.step = learning_rate(config, t);
      rec.active_count = static_cast<Eigen::Index>(Lambda.size());
      {
        Vector alpha1 = code.codes.col(0);
        ClassifierWeights wv;
        wv.W = W;
        rec.sample_loss = supervised_loss(sample.label, wv, alpha1);
      }

      Vector beta;
      if (Lambda.empty()) {
        beta = Vector::Zero(d * config.S);
      } else {
        const Eigen::Index m = static_cast<Eigen::Index>(Lambda.size());
        Matrix gram_LL(m, m), W_L(W.rows(), m), rows_L(m, config.S);
        for (Eigen::Index i = 0; i < m; ++i) {
          W_L.col(i) = W.col(Lambda[i]);
          rows_L.row(i) = code.codes.row(Lambda[i]);
          for (Eigen::Index j = 0; j < m; ++j)
            gram_LL(i, j) = problem.gram_DD(Lambda[i], Lambda[j]);
        }
        const Matrix Delta = assemble_delta(rows_L);
        beta = solve_beta(gram_LL, Delta, config.lambda1, config.lambda2, W_L,
                          code.codes.col(0), sample.label, Lambda, d, config.S,
                          &rec.pd_guard);
      }

      detail::apply_gradient_step(atoms, W, sample, code.codes, Lambda, beta,
                                  rec.step, config.kernel, config.nu,
                                  BetaLayout::PixelMajor);
      log.push_back(rec);
    } catch (const NumericError& e) {
      throw NumericError("train iteration " + std::to_string(t) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw InvalidInput("train iteration " + std::to_string(t) + ": " + e.what());
    }
  }

  ModelPair out;
  out.dictionary = Dictionary(std::move(atoms));
  out.weights.W = std::move(W);
  out.train_log = std::move(log);
  return out;
}

inline void write_train_log(std::ostream& os, const std::vector<TrainRecord>& log) {
  os << "t,step,active_count,sample_loss\n";
  char buf[64];
  for (const TrainRecord& r : log) {
    os << r.t << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.step);
    os << buf << ',' << r.active_count << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.sample_loss);
    os << buf << '\n';
  }
}

}  // namespace kjdl

#endif  // KJDL_TASK_HPP

#ifndef KJDL_UNSUP_HPP
#define KJDL_UNSUP_HPP

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "kjdl/common.hpp"
#include "kjdl/jsc.hpp"
#include "kjdl/kernel.hpp"
#include "kjdl/model.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Reconstruction-only (unsupervised) dictionary learning, used to produce the
// starting point for the task-driven trainer, plus the ridge initialization
// of the classifier on top of frozen codes.
// ---------------------------------------------------------------------------

// Start from d distinct training pixels drawn without replacement, each
// projected into the unit ball.
inline Dictionary init_dictionary(const Matrix& X, Eigen::Index d, std::uint64_t seed) {
  if (d > X.cols())
    throw InvalidInput("init_dictionary: more atoms requested than training pixels");
  if (d < 1) throw InvalidInput("init_dictionary: need at least one atom");
  auto rng = make_rng(seed, stream::kInitDictionary);
  const std::vector<std::size_t> picks = sample_without_replacement(
      static_cast<std::size_t>(X.cols()), static_cast<std::size_t>(d), rng);
  Matrix atoms(X.rows(), d);
  for (Eigen::Index j = 0; j < d; ++j)
    atoms.col(j) = X.col(static_cast<Eigen::Index>(picks[static_cast<std::size_t>(j)]));
  project_columns_unit_ball(atoms);
  return Dictionary(std::move(atoms));
}

namespace detail {

// Gradient of the reconstruction term 1/2 ||phi(x) - phi(D) a||^2 with the
// code held fixed, taken atom by atom through the kernel:
//   dR/d d_k = -a_k * ( k'(x, d_k) - sum_j a_j k'(d_j, d_k) ).
inline Matrix reconstruction_gradient(const KernelSpec& spec, const Matrix& atoms,
                                      const Eigen::Ref<const Vector>& x,
                                      const Vector& a) {
  Matrix G = Matrix::Zero(atoms.rows(), atoms.cols());
  for (Eigen::Index k = 0; k < atoms.cols(); ++k) {
    if (a(k) == 0.0) continue;
    Vector g = grad2(spec, x, atoms.col(k));
    for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
      if (a(j) == 0.0) continue;
      g -= a(j) * grad2(spec, atoms.col(j), atoms.col(k));
    }
    G.col(k) = -a(k) * g;
  }
  return G;
}

}  // namespace detail

// Projected SGD on the expected reconstruction loss: draw a pixel, code it
// with the current atoms, step the atoms against the reconstruction gradient
// at the frozen code, project back onto the unit ball. Learning rate follows
// the min(rho, rho * t0 / t) schedule shared with the supervised trainer.
inline Dictionary train_unsupervised(const Matrix& X, Eigen::Index d, double lambda1,
                                     double lambda2, double rho, double t0, int T,
                                     const KernelSpec& spec, std::uint64_t seed,
                                     const SolverOptions& opts = SolverOptions{}) {
  if (T < 0) throw InvalidInput("train_unsupervised: negative iteration count");
  if (!(rho >= 0.0) || !(t0 > 0.0))
    throw InvalidInput("train_unsupervised: bad learning-rate parameters");
  spec.validate();

  Dictionary dict = init_dictionary(X, d, seed);
  auto rng = make_rng(seed, stream::kUnsupervisedDraw);

  for (int t = 1; t <= T; ++t) {
    const std::size_t pick = uniform_index(static_cast<std::size_t>(X.cols()), rng);
    const auto x = X.col(static_cast<Eigen::Index>(pick));

    const Matrix gram_DD = gram_symmetric(spec, dict.atoms);
    Vector gram_Dx(d);
    for (Eigen::Index j = 0; j < d; ++j)
      gram_Dx(j) = eval(spec, dict.atoms.col(j), x);
    const Vector a = solve_elastic_net(gram_DD, gram_Dx, lambda1, lambda2, opts);

    const double lr = std::min(rho, rho * t0 / static_cast<double>(t));
    dict.atoms -= lr * detail::reconstruction_gradient(spec, dict.atoms, x, a);
    project_columns_unit_ball(dict.atoms);
  }
  dict.check();
  return dict;
}

// Closed-form ridge fit of the classifier on frozen codes:
//   W = Y A^T (A A^T + nu N I)^(-1),
// the unique minimizer of mean squared label error + nu/2 ||W||_F^2.
inline ClassifierWeights init_classifier(const Matrix& codes, const Matrix& Y, double nu) {
  if (codes.cols() != Y.cols())
    throw InvalidInput("init_classifier: code/label count mismatch");
  if (!(nu > 0.0)) throw InvalidInput("init_classifier: nu must be positive");
  const Eigen::Index d = codes.rows();
  const double N = static_cast<double>(codes.cols());
  Matrix M = codes * codes.transpose();
  M.diagonal().array() += nu * N;
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success)
    throw NumericError("init_classifier: ridge system failed to factorize");
  ClassifierWeights w;
  // Solve M X = A Y^T, then W = X^T (M symmetric).
  w.W = llt.solve(codes * Y.transpose()).transpose();
  return w;
}

}  // namespace kjdl

#endif  // KJDL_UNSUP_HPP

#ifndef KJDL_JSC_HPP
#define KJDL_JSC_HPP

#include <Eigen/Cholesky>
#include <cmath>
#include <string>
#include <vector>

#include "kjdl/common.hpp"
#include "kjdl/kernel.hpp"
#include "kjdl/model.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Joint sparse coding of a pixel neighborhood in feature space:
//
//   min_A  1/2 sum_s ||phi(x^s) - phi(D) a^s||^2 + l1 * sum_j ||row_j(A)||_2
//          + l2/2 * ||A||_F^2
//
// expanded through the kernel so only Gram blocks enter. The row-sum penalty
// couples the S columns: an atom is either used by the whole neighborhood or
// by nobody, which is what makes the codes "joint".
//
// Solved by proximal gradient on the smooth part with a row-wise group
// shrink, plus a Newton refinement on the detected support that pushes the
// optimality residual toward machine precision (the finite-difference
// harness needs solutions far tighter than the shrink iteration alone
// delivers in reasonable time).
// ---------------------------------------------------------------------------

struct SolverOptions {
  int max_iters = 20000;
  double kkt_tol = 1e-6;     // stop when the optimality residual drops below
  double active_tol = 1e-6;  // row norms above this count as active
  bool polish = true;        // Newton refinement on the detected support
  bool record_history = false;
  bool warm_start = false;   // honor a caller-provided starting point
};

struct JscProblem {
  Matrix gram_DD;   // d x d Gram of the atoms
  Matrix gram_DX;   // d x S cross Gram, atoms vs. neighborhood pixels
  Vector kxx;       // S self-similarities k(x^s, x^s); objective constant only
  double lambda1 = 0.0;
  double lambda2 = 0.0;

  Eigen::Index atom_count() const { return gram_DD.rows(); }
  Eigen::Index column_count() const { return gram_DX.cols(); }

  void validate() const {
    if (gram_DD.rows() != gram_DD.cols())
      throw InvalidInput("JscProblem: gram_DD not square");
    if (gram_DX.rows() != gram_DD.rows())
      throw InvalidInput("JscProblem: gram_DX row count mismatch");
    if (kxx.size() != gram_DX.cols())
      throw InvalidInput("JscProblem: kxx length mismatch");
    if (lambda1 < 0.0 || lambda2 < 0.0)
      throw InvalidInput("JscProblem: negative regularization weight");
  }
};

inline JscProblem make_jsc_problem(const KernelSpec& spec, const Dictionary& dict,
                                   const Matrix& X, double lambda1, double lambda2) {
  if (X.rows() != dict.dim())
    throw InvalidInput("make_jsc_problem: pixel dimension != atom dimension");
  JscProblem p;
  p.gram_DD = gram_symmetric(spec, dict.atoms);
  p.gram_DX = gram(spec, dict.atoms, X);
  p.kxx.resize(X.cols());
  for (Eigen::Index s = 0; s < X.cols(); ++s)
    p.kxx(s) = eval(spec, X.col(s), X.col(s));
  p.lambda1 = lambda1;
  p.lambda2 = lambda2;
  return p;
}

struct JointSparseCode {
  Matrix codes;          // d x S, column s = code of pixel s
  IndexList active_set;  // rows with norm above active_tol, ascending
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool polish_applied = false;
  std::vector<double> objective_history;  // filled when record_history is set
};

// Thrown when the iteration budget runs out above tolerance; carries the last
// iterate so callers can inspect (or salvage) it.
struct SolverStall : NumericError {
  Matrix last_codes;
  double kkt_residual;
  SolverStall(Matrix A, double kkt, int iters)
      : NumericError("joint sparse coding stalled after " + std::to_string(iters) +
                     " iterations, optimality residual " + std::to_string(kkt)),
        last_codes(std::move(A)),
        kkt_residual(kkt) {}
};

namespace detail {

// Objective minus the code-independent constant sum(kxx)/2. The solver makes
// every decision on this quantity, so the codes cannot depend on kxx.
inline double jsc_objective_varpart(const JscProblem& p, const Matrix& A) {
  double obj = 0.0;
  for (Eigen::Index s = 0; s < A.cols(); ++s) {
    const Vector Ka = p.gram_DD * A.col(s);
    obj += 0.5 * A.col(s).dot(Ka) - A.col(s).dot(p.gram_DX.col(s));
  }
  for (Eigen::Index j = 0; j < A.rows(); ++j) obj += p.lambda1 * A.row(j).norm();
  obj += 0.5 * p.lambda2 * A.squaredNorm();
  return obj;
}

}  // namespace detail

inline double jsc_objective(const JscProblem& p, const Matrix& A) {
  return detail::jsc_objective_varpart(p, A) + 0.5 * p.kxx.sum();
}

// Rows whose l2 norm exceeds tol, in ascending order.
inline IndexList active_set(const Matrix& codes, double tol) {
  IndexList L;
  for (Eigen::Index j = 0; j < codes.rows(); ++j)
    if (codes.row(j).norm() > tol) L.push_back(j);
  return L;
}

// Worst-case violation of the stationarity conditions. With
// R = gram_DX - gram_DD A - l2 A (the negative smooth gradient), a nonzero
// row must line up with l1 times its direction, and a zero row must see
// ||R_j|| <= l1.
inline double check_optimality(const JscProblem& p, const Matrix& A) {
  const Matrix R = p.gram_DX - p.gram_DD * A - p.lambda2 * A;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    const double rn = A.row(j).norm();
    double v;
    if (rn > 0.0)
      v = (R.row(j) - (p.lambda1 / rn) * A.row(j)).norm();
    else
      v = std::max(0.0, R.row(j).norm() - p.lambda1);
    worst = std::max(worst, v);
  }
  return worst;
}

// Curvature of the row-norm penalty at a nonzero row a: (I - u u^T) / ||a||
// with u = a / ||a||. Written in this normalized form so a single-column row
// gives an exact zero block instead of a 1-ulp residue.
inline Matrix row_curvature_block(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double r = row.norm();
  if (!(r > 0.0)) throw InvalidInput("row_curvature_block: zero row");
  const Eigen::RowVectorXd u = row / r;
  const Eigen::Index S = row.size();
  return (Matrix::Identity(S, S) - u.transpose() * u) / r;
}

namespace detail {

// Largest eigenvalue of a symmetric PSD matrix by power iteration from a
// deterministic start, padded by a relative margin so the proximal step size
// 1 / (lmax + l2) stays on the safe side.
inline double spectral_bound(const Matrix& K) {
  const Eigen::Index d = K.rows();
  Vector v = Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  double lam = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vector w = K * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    const double lam_new = v.dot(w);
    v = w / wn;
    if (std::abs(lam_new - lam) <= 1e-12 * std::max(1.0, std::abs(lam_new))) {
      lam = lam_new;
      break;
    }
    lam = lam_new;
  }
  return std::max(lam, 0.0) * (1.0 + 1e-6);
}

// One Newton step for the stationarity system restricted to the support L:
//   K_LL A_L + l2 A_L - K_LX + l1 N(A_L) = 0,   N(A)_j = a_j / ||a_j||.
// The Jacobian in atom-major vec order is Kron(K_LL, I_S) + l1 blockdiag(D_j)
// + l2 I. Returns false when the factorization or the acceptance test fails;
// on success A and kkt are replaced by the refined values.
inline bool polish_step(const JscProblem& p, Matrix& A, double& kkt, double active_tol) {
  const IndexList L = active_set(A, active_tol);
  if (L.empty()) return false;
  const Eigen::Index m = static_cast<Eigen::Index>(L.size());
  const Eigen::Index S = A.cols();

  Matrix K_LL(m, m), K_LX(m, S), A_L(m, S);
  for (Eigen::Index i = 0; i < m; ++i) {
    K_LX.row(i) = p.gram_DX.row(L[i]);
    A_L.row(i) = A.row(L[i]);
    for (Eigen::Index j = 0; j < m; ++j) K_LL(i, j) = p.gram_DD(L[i], L[j]);
  }

  Matrix F = K_LL * A_L - K_LX + p.lambda2 * A_L;
  for (Eigen::Index i = 0; i < m; ++i)
    F.row(i) += (p.lambda1 / A_L.row(i).norm()) * A_L.row(i);

  Matrix H = Matrix::Zero(m * S, m * S);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j)
      H.block(i * S, j * S, S, S).diagonal().setConstant(K_LL(i, j));
    H.block(i * S, i * S, S, S) += p.lambda1 * row_curvature_block(A_L.row(i));
    H.block(i * S, i * S, S, S).diagonal().array() += p.lambda2;
  }

  Vector rhs(m * S);
  for (Eigen::Index i = 0; i < m; ++i) rhs.segment(i * S, S) = -F.row(i).transpose();

  Eigen::LLT<Matrix> llt(H);
  if (llt.info() != Eigen::Success) return false;
  const Vector delta = llt.solve(rhs);
  if (!delta.allFinite()) return false;

  Matrix A_new = A;
  for (Eigen::Index i = 0; i < m; ++i)
    A_new.row(L[i]) += delta.segment(i * S, S).transpose();

  const double kkt_new = check_optimality(p, A_new);
  const double obj_old = jsc_objective_varpart(p, A);
  const double obj_new = jsc_objective_varpart(p, A_new);
  if (kkt_new >= kkt || obj_new > obj_old + 1e-14 * std::max(1.0, std::abs(obj_old)))
    return false;
  A.swap(A_new);
  kkt = kkt_new;
  return true;
}

}  // namespace detail

inline JointSparseCode solve_jsc(const JscProblem& p, const SolverOptions& opts,
                                 const Matrix* start = nullptr) {
  p.validate();
  const Eigen::Index d = p.atom_count();
  const Eigen::Index S = p.column_count();

  const double curv = detail::spectral_bound(p.gram_DD) + p.lambda2;
  if (!(curv > 0.0))
    throw NumericError("joint sparse coding: smooth part has zero curvature");
  const double eta = 1.0 / curv;

  JointSparseCode out;
  out.codes = Matrix::Zero(d, S);
  if (opts.warm_start && start && start->rows() == d && start->cols() == S)
    out.codes = *start;
  Matrix& A = out.codes;

  constexpr double kPolishTrigger = 1e-4;
  constexpr int kPolishCooldown = 50;
  int last_polish_attempt = -kPolishCooldown;

  double kkt = check_optimality(p, A);
  if (opts.record_history)
    out.objective_history.push_back(jsc_objective(p, A));
  bool converged = kkt <= opts.kkt_tol;  // e.g. A = 0 already optimal

  for (int it = 0; !converged && it < opts.max_iters; ++it) {
    out.iterations = it + 1;

    const Matrix B = A - eta * (p.gram_DD * A - p.gram_DX + p.lambda2 * A);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double bn = B.row(j).norm();
      if (bn > eta * p.lambda1)
        A.row(j) = (1.0 - eta * p.lambda1 / bn) * B.row(j);
      else
        A.row(j).setZero();
    }

    kkt = check_optimality(p, A);
    if (!std::isfinite(kkt))
      throw NumericError("joint sparse coding diverged (non-finite residual)");

    if (opts.polish && kkt <= kPolishTrigger && it - last_polish_attempt >= kPolishCooldown) {
      last_polish_attempt = it;
      if (detail::polish_step(p, A, kkt, opts.active_tol)) out.polish_applied = true;
    }

    if (opts.record_history) out.objective_history.push_back(jsc_objective(p, A));

    if (kkt <= opts.kkt_tol) {
      // Flush rows that converged to a numerically negligible norm; if that
      // nudges the residual back above tolerance, keep iterating.
      bool flushed = false;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double rn = A.row(j).norm();
        if (rn > 0.0 && rn <= opts.active_tol) {
          A.row(j).setZero();
          flushed = true;
        }
      }
      if (flushed) kkt = check_optimality(p, A);
      converged = kkt <= opts.kkt_tol;
    }
  }

  if (!converged) throw SolverStall(std::move(A), kkt, out.iterations);

  out.kkt_residual = kkt;
  out.active_set = active_set(A, opts.active_tol);
  out.objective = jsc_objective(p, A);
  return out;
}

// Single-column convenience wrapper: with S = 1 the row-sum penalty collapses
// to a plain l1 term, i.e. an elastic net in the kernel domain. Shares every
// line of arithmetic with solve_jsc so independent callers agree bit for bit.
inline Vector solve_elastic_net(const Matrix& gram_DD, const Vector& gram_Dx,
                                double lambda1, double lambda2,
                                const SolverOptions& opts) {
  JscProblem p;
  p.gram_DD = gram_DD;
  p.gram_DX = gram_Dx;
  p.kxx = Vector::Zero(1);  // constant term; never touches the minimizer
  p.lambda1 = lambda1;
  p.lambda2 = lambda2;
  return solve_jsc(p, opts).codes.col(0);
}

}  // namespace kjdl

#endif  // KJDL_JSC_HPP

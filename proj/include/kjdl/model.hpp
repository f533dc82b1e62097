#ifndef KJDL_MODEL_HPP
#define KJDL_MODEL_HPP

#include <cmath>
#include <utility>

#include "kjdl/common.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Model state shared by the unsupervised and task-driven trainers: the atom
// matrix (columns constrained to the unit ball) and the linear classifier
// that rides on top of the sparse codes.
// ---------------------------------------------------------------------------

// Scale every column with norm > 1 back onto the unit sphere; columns already
// inside the ball are left untouched (projection onto the product of balls).
inline void project_columns_unit_ball(Matrix& M) {
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    const double nrm = M.col(j).norm();
    if (nrm > 1.0) M.col(j) /= nrm;
  }
}

struct Dictionary {
  Matrix atoms;  // n x d, one atom per column, each within the unit ball

  Dictionary() = default;
  explicit Dictionary(Matrix a) : atoms(std::move(a)) { check(); }

  Eigen::Index dim() const { return atoms.rows(); }
  Eigen::Index size() const { return atoms.cols(); }

  void check() const {
    if (atoms.size() == 0) throw InvalidInput("Dictionary: empty atom matrix");
    for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
      const double nrm = atoms.col(j).norm();
      if (!std::isfinite(nrm) || nrm > 1.0 + 1e-12)
        throw InvalidInput("Dictionary: atom outside the unit ball");
    }
  }

  std::uint64_t fingerprint() const { return hash_matrix(atoms); }
};

struct ClassifierWeights {
  Matrix W;  // C x d, row per class

  Eigen::Index classes() const { return W.rows(); }
  Eigen::Index code_dim() const { return W.cols(); }
};

}  // namespace kjdl

#endif  // KJDL_MODEL_HPP

#ifndef KJDL_CLASSIFY_HPP
#define KJDL_CLASSIFY_HPP

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <vector>

#include "kjdl/common.hpp"
#include "kjdl/jsc.hpp"
#include "kjdl/kernel.hpp"
#include "kjdl/task.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Inference: score a coded neighborhood with the learned classifier, or run
// the classic sparse-representation baseline (code over a dictionary of all
// training pixels, assign the class whose atoms reconstruct best), plus the
// accuracy bookkeeping.
// ---------------------------------------------------------------------------

// Dictionary of raw training pixels for the representation baseline; every
// atom carries its class.
struct LabeledDictionary {
  Matrix atoms;                 // n x N, one training pixel per column
  std::vector<int> atom_labels; // class ids 1..C, aligned with columns

  int class_count() const {
    int C = 0;
    for (int c : atom_labels) C = std::max(C, c);
    return C;
  }

  void check() const {
    if (atoms.cols() != static_cast<Eigen::Index>(atom_labels.size()))
      throw InvalidInput("LabeledDictionary: label/atom count mismatch");
    if (atoms.cols() == 0) throw InvalidInput("LabeledDictionary: empty");
    const int C = class_count();
    std::vector<int> seen(static_cast<std::size_t>(C) + 1, 0);
    for (int c : atom_labels) {
      if (c < 1 || c > C) throw InvalidInput("LabeledDictionary: label out of range");
      seen[static_cast<std::size_t>(c)] = 1;
    }
    for (int c = 1; c <= C; ++c)
      if (!seen[static_cast<std::size_t>(c)])
        throw InvalidInput("LabeledDictionary: class " + std::to_string(c) +
                           " owns no atoms");
  }
};

struct EvalReport {
  double overall_accuracy = 0.0;
  double average_accuracy = 0.0;
  Vector per_class_accuracy;  // recall per class; -1 marks a class absent from truth
  Eigen::MatrixXi confusion;  // row = true class, column = predicted class
};

struct SdlPrediction {
  int label = 0;     // 1-based class id
  Vector scores;     // raw classifier scores, one per class
};

// Lowest index wins ties, so degenerate all-equal scores deterministically
// yield class 1.
inline int argmax_lowest(const Vector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best + 1;
}

inline SdlPrediction predict_sdl(const ModelPair& model, const Matrix& sample_pixels,
                                 const KernelSpec& spec, double lambda1, double lambda2,
                                 const SolverOptions& opts = SolverOptions{}) {
  const JscProblem p =
      make_jsc_problem(spec, model.dictionary, sample_pixels, lambda1, lambda2);
  const JointSparseCode code = solve_jsc(p, opts);
  SdlPrediction out;
  out.scores = model.weights.W * code.codes.col(0);
  out.label = argmax_lowest(out.scores);
  return out;
}

enum class SrcPrior { L1, L12 };

// Representation baseline: code the sample over all training pixels, then
// compare per-class reconstruction residuals of the CENTER pixel in the
// kernel domain, keeping only the candidate class's coefficients:
//   r_c = k(x,x) - 2 a_c . k(D, x) + a_c . k(D, D) a_c.
// The L1 prior codes the center pixel alone; L12 codes the neighborhood
// jointly (identical when S = 1). Lowest residual wins; ties -> lowest class.
inline int predict_src(const LabeledDictionary& dict, const Matrix& sample_pixels,
                       const KernelSpec& spec, SrcPrior prior, double lambda1,
                       double lambda2, const SolverOptions& opts = SolverOptions{}) {
  dict.check();
  const Matrix coded_pixels =
      prior == SrcPrior::L1 ? Matrix(sample_pixels.col(0)) : sample_pixels;
  const Dictionary as_dict =
      [&] {  // training pixels are normalized, hence already inside the ball
        Dictionary dd;
        dd.atoms = dict.atoms;
        return dd;
      }();
  const JscProblem p = make_jsc_problem(spec, as_dict, coded_pixels, lambda1, lambda2);
  const JointSparseCode code = solve_jsc(p, opts);

  const Vector a = code.codes.col(0);
  const int C = dict.class_count();
  int best_class = 1;
  double best_res = 0.0;
  for (int c = 1; c <= C; ++c) {
    Vector ac = Vector::Zero(a.size());
    for (Eigen::Index j = 0; j < a.size(); ++j)
      if (dict.atom_labels[static_cast<std::size_t>(j)] == c) ac(j) = a(j);
    const double res =
        p.kxx(0) - 2.0 * ac.dot(p.gram_DX.col(0)) + ac.dot(p.gram_DD * ac);
    if (c == 1 || res < best_res) {
      best_res = res;
      best_class = c;
    }
  }
  return best_class;
}

inline EvalReport evaluate(const std::vector<int>& predictions,
                           const std::vector<int>& truth) {
  if (predictions.size() != truth.size())
    throw InvalidInput("evaluate: prediction/truth length mismatch");
  if (truth.empty()) throw InvalidInput("evaluate: empty inputs");
  int C = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1 || predictions[i] < 1)
      throw InvalidInput("evaluate: class ids must be >= 1");
    C = std::max(C, std::max(truth[i], predictions[i]));
  }

  EvalReport rep;
  rep.confusion = Eigen::MatrixXi::Zero(C, C);
  for (std::size_t i = 0; i < truth.size(); ++i)
    rep.confusion(truth[i] - 1, predictions[i] - 1) += 1;

  rep.per_class_accuracy = Vector::Constant(C, -1.0);
  double recall_sum = 0.0;
  int present = 0;
  long correct = 0;
  for (int c = 0; c < C; ++c) {
    const long row_total = rep.confusion.row(c).sum();
    correct += rep.confusion(c, c);
    if (row_total > 0) {
      rep.per_class_accuracy(c) =
          static_cast<double>(rep.confusion(c, c)) / static_cast<double>(row_total);
      recall_sum += rep.per_class_accuracy(c);
      ++present;
    }
  }
  rep.overall_accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  rep.average_accuracy = recall_sum / static_cast<double>(present);
  return rep;
}

// Batch CSV: sample_id,true_class,pred_class,score_1..score_C. For methods
// without score vectors (the representation baseline), pass empty scores and
// the score columns are omitted.
inline void write_predictions(std::ostream& os, const std::vector<int>& truth,
                              const std::vector<int>& predictions,
                              const std::vector<Vector>& scores) {
  const bool with_scores = !scores.empty();
  const Eigen::Index C = with_scores ? scores.front().size() : 0;
  os << "sample_id,true_class,pred_class";
  for (Eigen::Index c = 1; c <= C; ++c) os << ",score_" << c;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    os << i << ',' << truth[i] << ',' << predictions[i];
    if (with_scores)
      for (Eigen::Index c = 0; c < C; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", scores[i](c));
        os << ',' << buf;
      }
    os << '\n';
  }
}

}  // namespace kjdl

#endif  // KJDL_CLASSIFY_HPP

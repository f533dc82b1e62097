#ifndef KJDL_GRADCHECK_HPP
#define KJDL_GRADCHECK_HPP

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <vector>

#include "kjdl/common.hpp"
#include "kjdl/jsc.hpp"
#include "kjdl/kernel.hpp"
#include "kjdl/task.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Finite-difference audit of the trainer's analytic gradients. Each trial
// draws a small random instance, tunes lambda1 until the support is neither
// empty nor full, and compares the implicit-differentiation gradients in D
// and W against central differences of the sampled loss.
//
// The comparison is only meaningful while the active set stays constant
// under perturbation (the loss is differentiable on that set); trials whose
// support flips during probing, or sits too close to the activation
// boundary, are discarded and redrawn.
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  int trials = 20;
  std::uint64_t seed = 0;
  double tol = 1e-4;
  double fd_step = 1e-5;
  bool corrupt_sign = false;  // negative control: flip one analytic entry
};

struct GradCheckTrial {
  int index = 0;
  KernelSpec kernel;
  Eigen::Index n = 0, d = 0, S = 0;
  int C = 0;
  double lambda1 = 0.0, lambda2 = 0.0;
  Eigen::Index active_count = 0;
  double rel_err_D = std::numeric_limits<double>::quiet_NaN();
  double rel_err_W = std::numeric_limits<double>::quiet_NaN();
  int redraws = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckTrial> trials;
  int total_redraws = 0;
  double max_rel_err = 0.0;
  bool all_passed = false;
};

namespace detail {

struct GradCheckInstance {
  Matrix atoms;
  Matrix W;
  NeighborhoodSample sample;
  KernelSpec kernel;
  double lambda1 = 0.0, lambda2 = 0.0, nu = 1e-3;
};

inline Vector random_unit(Eigen::Index n, std::mt19937_64& rng) {
  Vector v(n);
  double nrm = 0.0;
  while (nrm == 0.0) {
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal_draw(rng);
    nrm = v.norm();
  }
  return v / nrm;
}

// Sampled classification loss at fixed W as a function of the atoms, via a
// fresh high-accuracy coding solve; also reports the support it used.
inline double sampled_loss(const GradCheckInstance& inst, const Matrix& atoms,
                           const Matrix& W, const SolverOptions& opts,
                           IndexList* support = nullptr) {
  Dictionary dict(atoms);
  const JscProblem p = make_jsc_problem(inst.kernel, dict, inst.sample.pixels,
                                        inst.lambda1, inst.lambda2);
  const JointSparseCode code = solve_jsc(p, opts);
  if (support) *support = code.active_set;
  double loss = 0.0;
  for (Eigen::Index c = 0; c < W.rows(); ++c) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) acc += W(c, j) * code.codes(j, 0);
    const double r = acc - inst.sample.label(c);
    loss += 0.5 * r * r;
  }
  return loss;
}

}  // namespace detail

inline GradCheckReport run_gradcheck(const GradCheckOptions& options) {
  if (options.trials < 1) throw InvalidInput("run_gradcheck: need at least one trial");
  auto rng = make_rng(options.seed, stream::kGradCheck);
  const double h = options.fd_step;

  SolverOptions solver;
  solver.max_iters = 200000;
  solver.kkt_tol = 1e-11;
  solver.active_tol = 1e-6;
  solver.polish = true;

  GradCheckReport report;
  report.all_passed = true;

  for (int slot = 0; slot < options.trials; ++slot) {
    GradCheckTrial trial;
    trial.index = slot;
    constexpr int kRedrawBudget = 50;
    bool done = false;

    for (int attempt = 0; attempt < kRedrawBudget && !done; ++attempt) {
      if (attempt > 0) {
        ++trial.redraws;
        ++report.total_redraws;
      }
      try {
        // --- draw an instance -------------------------------------------
        detail::GradCheckInstance inst;
        inst.kernel.kind = static_cast<KernelKind>(slot % 3);
        inst.kernel.sigma = 1.0;
        inst.kernel.degree = 2 + (slot % 2);
        inst.lambda2 = (slot % 2 == 0) ? 0.0 : 1e-3;

        const Eigen::Index n = 4 + static_cast<Eigen::Index>(uniform_index(5, rng));
        const Eigen::Index dmax = std::min<Eigen::Index>(6, n);
        const Eigen::Index d =
            2 + static_cast<Eigen::Index>(uniform_index(
                    static_cast<std::size_t>(dmax - 1), rng));
        const Eigen::Index S = 1 + static_cast<Eigen::Index>(uniform_index(3, rng));
        const int C = 2 + static_cast<int>(uniform_index(2, rng));

        inst.atoms.resize(n, d);
        for (Eigen::Index j = 0; j < d; ++j)
          inst.atoms.col(j) = 0.9 * detail::random_unit(n, rng);
        inst.sample.pixels.resize(n, S);
        for (Eigen::Index s = 0; s < S; ++s)
          inst.sample.pixels.col(s) = detail::random_unit(n, rng);
        inst.W.resize(C, d);
        for (Eigen::Index c = 0; c < C; ++c)
          for (Eigen::Index j = 0; j < d; ++j) inst.W(c, j) = 0.5 * normal_draw(rng);
        inst.sample.label = Vector::Zero(C);
        inst.sample.label(static_cast<Eigen::Index>(uniform_index(
            static_cast<std::size_t>(C), rng))) = 1.0;

        // --- tune lambda1 for a strict intermediate support --------------
        Dictionary dict(inst.atoms);
        JscProblem probe = make_jsc_problem(inst.kernel, dict, inst.sample.pixels,
                                            0.0, inst.lambda2);
        double hi = 0.0;
        for (Eigen::Index j = 0; j < d; ++j)
          hi = std::max(hi, probe.gram_DX.row(j).norm());
        double lambda1 = 0.3 * hi;
        JointSparseCode code;
        bool sized = false;
        for (int tune = 0; tune < 40; ++tune) {
          probe.lambda1 = lambda1;
          code = solve_jsc(probe, solver);
          const auto m = static_cast<Eigen::Index>(code.active_set.size());
          if (m >= 1 && m < d) {
            sized = true;
            break;
          }
          lambda1 *= (m == 0) ? 0.6 : 1.35;
        }
        if (!sized) continue;  // redraw
        inst.lambda1 = lambda1;
        const IndexList Lambda = code.active_set;
        const Eigen::Index m = static_cast<Eigen::Index>(Lambda.size());

        // --- stability margins -------------------------------------------
        bool stable = true;
        for (const Eigen::Index j : Lambda)
          if (code.codes.row(j).norm() < 50.0 * h) stable = false;
        {
          const Matrix R = probe.gram_DX - probe.gram_DD * code.codes -
                           inst.lambda2 * code.codes;
          for (Eigen::Index j = 0; j < d && stable; ++j) {
            bool active = false;
            for (const Eigen::Index a : Lambda) active = active || a == j;
            if (!active && R.row(j).norm() > lambda1 * (1.0 - 1e-3)) stable = false;
          }
        }
        if (!stable) continue;  // redraw

        // --- analytic gradients ------------------------------------------
        Matrix gram_LL(m, m), W_L(C, m), rows_L(m, S);
        for (Eigen::Index i = 0; i < m; ++i) {
          W_L.col(i) = inst.W.col(Lambda[i]);
          rows_L.row(i) = code.codes.row(Lambda[i]);
          for (Eigen::Index j = 0; j < m; ++j)
            gram_LL(i, j) = probe.gram_DD(Lambda[i], Lambda[j]);
        }
        const Matrix Delta = assemble_delta(rows_L);
        const Vector beta =
            solve_beta(gram_LL, Delta, inst.lambda1, inst.lambda2, W_L,
                       code.codes.col(0), inst.sample.label, Lambda, d, S);
        const Matrix B = detail::unpack_beta(beta, d, S, BetaLayout::PixelMajor);
        Matrix G_D = detail::dictionary_gradient(inst.atoms, inst.sample, code.codes,
                                                 Lambda, B, inst.kernel);
        const Vector rw = detail::center_residual(inst.W, code.codes, inst.sample.label);
        Matrix G_W = detail::classifier_gradient(inst.W, rw, code.codes, inst.nu);

        if (options.corrupt_sign) {
          Eigen::Index br = 0, bc = 0;
          G_D.cwiseAbs().maxCoeff(&br, &bc);
          G_D(br, bc) = -G_D(br, bc);
          G_W.cwiseAbs().maxCoeff(&br, &bc);
          G_W(br, bc) = -G_W(br, bc);
        }

        // --- finite differences in D -------------------------------------
        bool flipped = false;
        Matrix G_fd(n, d);
        for (Eigen::Index k = 0; k < d && !flipped; ++k)
          for (Eigen::Index r = 0; r < n && !flipped; ++r) {
            Matrix Ap = inst.atoms;
            IndexList sup_p, sup_m;
            Ap(r, k) += h;
            const double fp = detail::sampled_loss(inst, Ap, inst.W, solver, &sup_p);
            Ap(r, k) -= 2.0 * h;
            const double fm = detail::sampled_loss(inst, Ap, inst.W, solver, &sup_m);
            if (sup_p != Lambda || sup_m != Lambda) {
              flipped = true;
              break;
            }
            G_fd(r, k) = (fp - fm) / (2.0 * h);
          }
        if (flipped) continue;  // redraw

        // --- finite differences in W -------------------------------------
        Matrix Gw_fd(C, d);
        for (Eigen::Index c = 0; c < C; ++c)
          for (Eigen::Index j = 0; j < d; ++j) {
            Matrix Wp = inst.W;
            Wp(c, j) += h;
            double fp = detail::sampled_loss(inst, inst.atoms, Wp, solver) +
                        0.5 * inst.nu * Wp.squaredNorm();
            Wp(c, j) -= 2.0 * h;
            double fm = detail::sampled_loss(inst, inst.atoms, Wp, solver) +
                        0.5 * inst.nu * Wp.squaredNorm();
            Gw_fd(c, j) = (fp - fm) / (2.0 * h);
          }

        trial.kernel = inst.kernel;
        trial.n = n;
        trial.d = d;
        trial.S = S;
        trial.C = C;
        trial.lambda1 = inst.lambda1;
        trial.lambda2 = inst.lambda2;
        trial.active_count = m;
        trial.rel_err_D =
            (G_D - G_fd).cwiseAbs().maxCoeff() / std::max(G_fd.cwiseAbs().maxCoeff(), 1e-8);
        trial.rel_err_W = (G_W - Gw_fd).cwiseAbs().maxCoeff() /
                          std::max(Gw_fd.cwiseAbs().maxCoeff(), 1e-8);
        trial.passed = trial.rel_err_D < options.tol && trial.rel_err_W < options.tol;
        done = true;
      } catch (const NumericError&) {
        continue;  // pathological draw (stalled solve, singular system): redraw
      }
    }

    report.all_passed = report.all_passed && done && trial.passed;
    if (done) {
      report.max_rel_err =
          std::max({report.max_rel_err, trial.rel_err_D, trial.rel_err_W});
    }
    report.trials.push_back(trial);
  }
  return report;
}

inline void print_gradcheck_report(std::ostream& os, const GradCheckReport& report) {
  char buf[160];
  for (const GradCheckTrial& t : report.trials) {
    std::snprintf(buf, sizeof buf,
                  "trial %2d  %-10s n=%d d=%d S=%d C=%d |support|=%d l1=%.4g l2=%.4g "
                  "relerr(D)=%.3e relerr(W)=%.3e redraws=%d  %s",
                  t.index, kernel_kind_name(t.kernel.kind).c_str(), static_cast<int>(t.n),
                  static_cast<int>(t.d), static_cast<int>(t.S), t.C,
                  static_cast<int>(t.active_count), t.lambda1, t.lambda2, t.rel_err_D,
                  t.rel_err_W, t.redraws, t.passed ? "PASS" : "FAIL");
    os << buf << '\n';
  }
  os << (report.all_passed ? "gradient audit: PASS" : "gradient audit: FAIL")
     << "  (max relative error " << report.max_rel_err << ", " << report.total_redraws
     << " redraws)\n";
}

}  // namespace kjdl

#endif  // KJDL_GRADCHECK_HPP

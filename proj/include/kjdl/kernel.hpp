#ifndef KJDL_KERNEL_HPP
#define KJDL_KERNEL_HPP

#include <cmath>
#include <string>

#include "kjdl/common.hpp"

namespace kjdl {

// ---------------------------------------------------------------------------
// Mercer kernel evaluation, Gram matrices and the kernel partial derivative
// with respect to the second argument. This header is the only place kernel
// formulas live; everything downstream works through eval/gram/grad2.
//
// Summation inside a single entry is a fixed forward loop, so results are
// bit-identical no matter how callers parallelize over entries.
// ---------------------------------------------------------------------------

enum class KernelKind { Linear, Gaussian, Polynomial };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double sigma = 1.0;  // Gaussian bandwidth, units of squared spectral distance
  int degree = 2;      // polynomial exponent

  void validate() const {
    if (kind == KernelKind::Gaussian && !(sigma > 0.0))
      throw InvalidInput("KernelSpec: Gaussian kernel requires sigma > 0");
    if (kind == KernelKind::Polynomial && degree < 1)
      throw InvalidInput("KernelSpec: polynomial kernel requires degree >= 1");
  }
};

inline std::string kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Gaussian: return "gaussian";
    case KernelKind::Polynomial: return "polynomial";
  }
  return "?";
}

inline KernelKind kernel_kind_from_name(const std::string& s) {
  if (s == "linear") return KernelKind::Linear;
  if (s == "gaussian") return KernelKind::Gaussian;
  if (s == "polynomial") return KernelKind::Polynomial;
  throw ConfigError("unknown kernel kind: " + s);
}

namespace detail {

inline double dot_fixed_order(const double* a, const double* b, Eigen::Index n) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline double sqdist_fixed_order(const double* a, const double* b, Eigen::Index n) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// b^e for small integer e >= 0 by plain repeated multiply (deterministic,
// unlike std::pow on some libms).
inline double pow_int(double b, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

}  // namespace detail

inline double eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x1,
                   const Eigen::Ref<const Vector>& x2) {
  if (x1.size() != x2.size())
    throw InvalidInput("kernel eval: vectors have different lengths");
  spec.validate();
  switch (spec.kind) {
    case KernelKind::Linear:
      return detail::dot_fixed_order(x1.data(), x2.data(), x1.size());
    case KernelKind::Gaussian:
      return std::exp(-detail::sqdist_fixed_order(x1.data(), x2.data(), x1.size()) /
                      spec.sigma);
    case KernelKind::Polynomial:
      return detail::pow_int(
          detail::dot_fixed_order(x1.data(), x2.data(), x1.size()), spec.degree);
  }
  throw InvalidInput("kernel eval: bad kind");
}

// Entry (i, j) is eval on column i of A and column j of B.
inline Matrix gram(const KernelSpec& spec, const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows())
    throw InvalidInput("gram: inputs have different row counts");
  Matrix K(A.cols(), B.cols());
  for (Eigen::Index j = 0; j < B.cols(); ++j)
    for (Eigen::Index i = 0; i < A.cols(); ++i)
      K(i, j) = eval(spec, A.col(i), B.col(j));
  return K;
}

// k(X, X); only the upper triangle is evaluated and mirrored, so the result
// is exactly symmetric.
inline Matrix gram_symmetric(const KernelSpec& spec, const Matrix& X) {
  Matrix K(X.cols(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = eval(spec, X.col(i), X.col(j));
      K(i, j) = v;
      K(j, i) = v;
    }
  return K;
}

// d/d(second argument) of k(x, .) evaluated at d.
inline Vector grad2(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Vector>& d) {
  if (x.size() != d.size())
    throw InvalidInput("kernel grad2: vectors have different lengths");
  spec.validate();
  switch (spec.kind) {
    case KernelKind::Linear:
      return x;
    case KernelKind::Gaussian: {
      const double q = detail::sqdist_fixed_order(x.data(), d.data(), x.size());
      return (2.0 / spec.sigma) * std::exp(-q / spec.sigma) * (x - d);
    }
    case KernelKind::Polynomial: {
      if (spec.degree == 1) return x;  // the zeroth power is taken as 1
      const double ip = detail::dot_fixed_order(x.data(), d.data(), x.size());
      return static_cast<double>(spec.degree) * detail::pow_int(ip, spec.degree - 1) * x;
    }
  }
  throw InvalidInput("kernel grad2: bad kind");
}

// Symmetric Gram of a dictionary, stamped with the content hash of the atoms
// it was computed from. Downstream caches compare fingerprints instead of
// matrices; training recomputes the Gram whenever the dictionary moves.
struct GramMatrix {
  Matrix values;
  std::uint64_t source_fingerprint = 0;
};

inline GramMatrix gram_fingerprinted(const KernelSpec& spec, const Matrix& atoms) {
  return GramMatrix{gram_symmetric(spec, atoms), hash_matrix(atoms)};
}

}  // namespace kjdl

#endif  // KJDL_KERNEL_HPP

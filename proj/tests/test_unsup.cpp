#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "kjdl/unsup.hpp"

using kjdl::KernelKind;
using kjdl::KernelSpec;
using kjdl::Matrix;
using kjdl::Vector;

namespace {

Matrix random_unit_columns(Eigen::Index n, Eigen::Index cols, std::uint64_t seed) {
  auto rng = kjdl::make_rng(seed, 77);
  Matrix X(n, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    Vector v(n);
    double nrm = 0.0;
    while (nrm == 0.0) {
      for (Eigen::Index i = 0; i < n; ++i) v(i) = kjdl::normal_draw(rng);
      nrm = v.norm();
    }
    X.col(j) = v / nrm;
  }
  return X;
}

// Leading eigenvector of X X^T by power iteration; reference for the
// single-atom reconstruction optimum on line-like data.
Vector principal_direction(const Matrix& X) {
  const Matrix M = X * X.transpose();
  Vector v = Vector::Ones(X.rows()).normalized();
  for (int it = 0; it < 2000; ++it) v = (M * v).normalized();
  return v;
}

double mean_coding_objective(const Matrix& X, const kjdl::Dictionary& dict,
                             const KernelSpec& spec, double l1, double l2) {
  kjdl::SolverOptions opts;
  opts.max_iters = 100000;
  double total = 0.0;
  for (Eigen::Index s = 0; s < X.cols(); ++s) {
    const auto p = kjdl::make_jsc_problem(spec, dict, X.col(s), l1, l2);
    total += kjdl::solve_jsc(p, opts).objective;
  }
  return total / static_cast<double>(X.cols());
}

}  // namespace

TEST_CASE("initial atoms are distinct training pixels") {
  const Matrix X = random_unit_columns(6, 12, 1);
  const kjdl::Dictionary dict = kjdl::init_dictionary(X, 5, 42);
  REQUIRE(dict.dim() == 6);
  REQUIRE(dict.size() == 5);

  // Unit-norm data stays untouched by the ball projection, so every atom must
  // equal some data column bit for bit, and no column may repeat.
  for (Eigen::Index j = 0; j < dict.size(); ++j) {
    int matches = 0;
    for (Eigen::Index s = 0; s < X.cols(); ++s)
      if ((dict.atoms.col(j).array() == X.col(s).array()).all()) ++matches;
    REQUIRE(matches == 1);
    for (Eigen::Index i = j + 1; i < dict.size(); ++i)
      REQUIRE(!(dict.atoms.col(j).array() == dict.atoms.col(i).array()).all());
  }

  const kjdl::Dictionary again = kjdl::init_dictionary(X, 5, 42);
  REQUIRE((again.atoms.array() == dict.atoms.array()).all());
  const kjdl::Dictionary other = kjdl::init_dictionary(X, 5, 43);
  REQUIRE(!(other.atoms.array() == dict.atoms.array()).all());

  REQUIRE_THROWS_AS(kjdl::init_dictionary(X, 13, 0), kjdl::InvalidInput);
  REQUIRE_THROWS_AS(kjdl::init_dictionary(X, 0, 0), kjdl::InvalidInput);
}

TEST_CASE("oversized pixels are projected into the unit ball") {
  Matrix X = 3.0 * random_unit_columns(4, 6, 2);
  const kjdl::Dictionary dict = kjdl::init_dictionary(X, 3, 7);
  for (Eigen::Index j = 0; j < dict.size(); ++j)
    REQUIRE(dict.atoms.col(j).norm() <= 1.0 + 1e-12);
}

TEST_CASE("zero warm-up iterations return the initialization unchanged") {
  const Matrix X = random_unit_columns(5, 10, 3);
  KernelSpec spec{KernelKind::Gaussian, 1.0, 2};
  const kjdl::Dictionary trained =
      kjdl::train_unsupervised(X, 4, 0.1, 0.0, 0.1, 10.0, 0, spec, 9);
  const kjdl::Dictionary init = kjdl::init_dictionary(X, 4, 9);
  REQUIRE((trained.atoms.array() == init.atoms.array()).all());
}

TEST_CASE("a single linear atom aligns with the dominant data direction") {
  // Data on a one-dimensional ray: optimal single atom for reconstruction
  // under the linear kernel is the ray direction itself.
  auto rng = kjdl::make_rng(4, 77);
  Vector dir(6);
  for (Eigen::Index i = 0; i < 6; ++i) dir(i) = kjdl::normal_draw(rng);
  dir.normalize();
  Matrix X(6, 30);
  for (Eigen::Index s = 0; s < 30; ++s)
    X.col(s) = (0.5 + 0.5 * kjdl::uniform_unit(rng)) * dir;

  KernelSpec spec{KernelKind::Linear, 1.0, 2};
  const kjdl::Dictionary dict =
      kjdl::train_unsupervised(X, 1, 0.01, 0.0, 0.5, 20.0, 400, spec, 5);
  const Vector ref = principal_direction(X);
  const double cosine =
      std::abs(dict.atoms.col(0).dot(ref)) / dict.atoms.col(0).norm();
  REQUIRE(cosine >= 0.99);
}

TEST_CASE("warm-up improves held-out reconstruction objectives") {
  // Three noisy prototype clusters; train on 36 pixels, score 18 fresh ones.
  auto rng = kjdl::make_rng(6, 77);
  const Matrix protos = random_unit_columns(8, 3, 60);
  auto draw_pixel = [&](int c) {
    Vector x = protos.col(c);
    for (Eigen::Index i = 0; i < 8; ++i) x(i) += 0.15 * kjdl::normal_draw(rng);
    return Vector(x / x.norm());
  };
  Matrix train(8, 36), held(8, 18);
  for (Eigen::Index s = 0; s < 36; ++s) train.col(s) = draw_pixel(static_cast<int>(s % 3));
  for (Eigen::Index s = 0; s < 18; ++s) held.col(s) = draw_pixel(static_cast<int>(s % 3));

  KernelSpec spec{KernelKind::Gaussian, 1.0, 2};
  const double l1 = 0.05, l2 = 0.0;
  const kjdl::Dictionary init = kjdl::init_dictionary(train, 5, 11);
  const kjdl::Dictionary trained =
      kjdl::train_unsupervised(train, 5, l1, l2, 0.3, 30.0, 300, spec, 11);

  const double before = mean_coding_objective(held, init, spec, l1, l2);
  const double after = mean_coding_objective(held, trained, spec, l1, l2);
  REQUIRE(after < before);
}

TEST_CASE("unsupervised training is deterministic in the seed") {
  const Matrix X = random_unit_columns(6, 20, 8);
  KernelSpec spec{KernelKind::Gaussian, 1.5, 2};
  const auto a = kjdl::train_unsupervised(X, 4, 0.05, 1e-3, 0.2, 10.0, 50, spec, 21);
  const auto b = kjdl::train_unsupervised(X, 4, 0.05, 1e-3, 0.2, 10.0, 50, spec, 21);
  REQUIRE((a.atoms.array() == b.atoms.array()).all());
  const auto c = kjdl::train_unsupervised(X, 4, 0.05, 1e-3, 0.2, 10.0, 50, spec, 22);
  REQUIRE(!(c.atoms.array() == a.atoms.array()).all());
}

TEST_CASE("classifier ridge fit satisfies its normal equations") {
  auto rng = kjdl::make_rng(10, 77);
  Matrix A(5, 14), Y = Matrix::Zero(3, 14);
  for (Eigen::Index j = 0; j < 14; ++j) {
    for (Eigen::Index i = 0; i < 5; ++i) A(i, j) = kjdl::normal_draw(rng);
    Y(static_cast<Eigen::Index>(j % 3), j) = 1.0;
  }
  const double nu = 1e-3;
  const kjdl::ClassifierWeights w = kjdl::init_classifier(A, Y, nu);
  const double N = 14.0;
  const Matrix resid =
      w.W * (A * A.transpose() + nu * N * Matrix::Identity(5, 5)) - Y * A.transpose();
  REQUIRE(resid.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("classifier ridge fit has the expected diagonal closed form") {
  // Identity codes: each class sees one sample per code axis, so
  // W = Y / (1 + nu * N).
  const Eigen::Index d = 4;
  const Matrix A = Matrix::Identity(d, d);
  Matrix Y = Matrix::Zero(2, d);
  Y(0, 0) = Y(0, 1) = 1.0;
  Y(1, 2) = Y(1, 3) = 1.0;
  const double nu = 0.01;
  const kjdl::ClassifierWeights w = kjdl::init_classifier(A, Y, nu);
  const Matrix expect = Y / (1.0 + nu * static_cast<double>(d));
  REQUIRE((w.W - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("classifier ridge fit rejects bad inputs") {
  const Matrix A = Matrix::Identity(3, 3);
  const Matrix Y = Matrix::Zero(2, 3);
  REQUIRE_THROWS_AS(kjdl::init_classifier(A, Y, 0.0), kjdl::InvalidInput);
  REQUIRE_THROWS_AS(kjdl::init_classifier(A, Matrix::Zero(2, 4), 1e-3),
                    kjdl::InvalidInput);
}

#include "doctest.h"

#include "shellflow/operator.hpp"

#include <Eigen/SVD>
#include <cmath>

using namespace shellflow;

namespace {

MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng = seeded_rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

VectorXd uniform_weights(int n) { return VectorXd::Constant(n, 1.0 / n); }

GramOperator random_gram(int n, int nparams, std::uint64_t seed, double t = 0.0) {
  return gram_operator(random_matrix(n, nparams, seed), uniform_weights(n), t);
}

}  // namespace

TEST_CASE("gram_operator: orthonormal rows give identity / n") {
  MatrixXd j = MatrixXd::Identity(4, 6);  // orthonormal rows
  const GramOperator m = gram_operator(j, uniform_weights(4), 0.0);
  CHECK((m.matrix - 0.25 * MatrixXd::Identity(4, 4)).norm() <= 1e-15);
}

TEST_CASE("gram_operator eigenvalues are squared singular values of the scaled jacobian") {
  const int n = 12, np = 7;
  const MatrixXd j = random_matrix(n, np, 2);
  const VectorXd w = uniform_weights(n);
  const GramOperator m = gram_operator(j, w, 0.0);

  const MatrixXd scaled = w.array().sqrt().matrix().asDiagonal() * j;
  Eigen::JacobiSVD<MatrixXd> svd(scaled);
  const SpectralSnapshot snap = eigensystem(m);

  CHECK(snap.rank == std::min(n, np));  // Gram rank bound, realized generically
  for (int k = 0; k < snap.rank; ++k) {
    const double expect = svd.singularValues()(k) * svd.singularValues()(k);
    CHECK(relative_diff(snap.eigenvalues(k), expect) <= 1e-10);
  }
}

TEST_CASE("eigensystem: diagonal example and PSD residual oracle") {
  GramOperator m;
  m.matrix = Eigen::Vector3d(3.0, 1.0, 2.0).asDiagonal();
  m.timestamp = 0.0;
  const SpectralSnapshot snap = eigensystem(m);
  CHECK(snap.eigenvalues(0) == doctest::Approx(3.0));
  CHECK(snap.eigenvalues(1) == doctest::Approx(2.0));
  CHECK(snap.eigenvalues(2) == doctest::Approx(1.0));
  for (int u = 0; u < 3; ++u) {
    VectorXd col = snap.eigenvectors.col(u).cwiseAbs();
    CHECK(col.maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  }

  GramOperator eye;
  eye.matrix = MatrixXd::Identity(5, 5);
  const SpectralSnapshot degen = eigensystem(eye);
  CHECK(degen.rank == 5);
  CHECK((degen.eigenvalues.array() == 1.0).all());

  const GramOperator rnd = random_gram(10, 15, 5);
  const SpectralSnapshot rs = eigensystem(rnd);
  const MatrixXd resid = rnd.matrix * rs.eigenvectors -
                         rs.eigenvectors * rs.eigenvalues.asDiagonal();
  CHECK(resid.norm() <= 1e-10 * rs.eigenvalues(0));
}

TEST_CASE("eigensystem reconstructs the operator on the retained rank") {
  const GramOperator m = random_gram(9, 20, 8);
  const SpectralSnapshot snap = eigensystem(m, 1e-12);
  const MatrixXd rebuilt =
      snap.eigenvectors * snap.eigenvalues.asDiagonal() * snap.eigenvectors.transpose();
  CHECK((rebuilt - m.matrix).norm() <= 1e-8 * m.matrix.norm());
}

TEST_CASE("eigensystem truncates by relative rank tolerance") {
  MatrixXd j = random_matrix(8, 3, 9);  // rank 3 out of 8
  const GramOperator m = gram_operator(j, uniform_weights(8), 0.0);
  const SpectralSnapshot snap = eigensystem(m, 1e-10);
  CHECK(snap.rank == 3);
  CHECK((snap.eigenvalues.array() > 0.0).all());
}

TEST_CASE("align_snapshots: identity, sign flip, small rotation") {
  const GramOperator m = random_gram(8, 12, 12);
  const SpectralSnapshot snap = eigensystem(m);

  SpectralSnapshot same = align_snapshots(snap, snap);
  CHECK(same.alignment.usable);
  for (int i = 0; i < same.rank; ++i) {
    CHECK(same.alignment.permutation[i] == i);
    CHECK(same.alignment.signs[i] == 1);
  }

  SpectralSnapshot flipped = snap;
  flipped.eigenvectors.col(2) *= -1.0;
  SpectralSnapshot fixed = align_snapshots(snap, flipped);
  CHECK(fixed.alignment.signs[2] == -1);
  CHECK((fixed.eigenvectors - snap.eigenvectors).norm() <= 1e-15);

  // small planar rotation in the (0, 1) eigenplane
  SpectralSnapshot rotated = snap;
  const double a = 1e-3;
  rotated.eigenvectors.col(0) = std::cos(a) * snap.eigenvectors.col(0) +
                                std::sin(a) * snap.eigenvectors.col(1);
  rotated.eigenvectors.col(1) = -std::sin(a) * snap.eigenvectors.col(0) +
                                std::cos(a) * snap.eigenvectors.col(1);
  SpectralSnapshot aligned = align_snapshots(snap, rotated);
  CHECK(aligned.alignment.usable);
  for (int i = 0; i < aligned.rank; ++i) CHECK(aligned.alignment.permutation[i] == i);
  CHECK(aligned.alignment.min_overlap >= std::cos(a) - 1e-12);

  // orthonormality survives alignment exactly (permutation + signs only)
  const MatrixXd gram = aligned.eigenvectors.transpose() * aligned.eigenvectors;
  CHECK((gram - MatrixXd::Identity(aligned.rank, aligned.rank)).norm() <= 1e-10);
}

TEST_CASE("align_snapshots flags weak overlap") {
  const SpectralSnapshot a = eigensystem(random_gram(6, 9, 21));
  const SpectralSnapshot b = eigensystem(random_gram(6, 9, 22));
  const SpectralSnapshot aligned = align_snapshots(a, b, 0.99);
  CHECK_FALSE(aligned.alignment.usable);
}

TEST_CASE("operator_derivative: linear, constant, quadratic Taylor oracle") {
  const MatrixXd a = 0.5 * (random_matrix(6, 6, 31) + random_matrix(6, 6, 31).transpose());
  const double dt = 0.01;

  const auto at = [&](double t, auto f) {
    GramOperator m;
    m.matrix = f(t) * a;
    m.timestamp = t;
    return m;
  };

  const auto lin = [](double t) { return t; };
  OperatorDerivative d = operator_derivative(at(1.0 - dt, lin), at(1.0 + dt, lin), dt);
  CHECK((d.matrix - a).norm() <= 1e-12 * a.norm());
  CHECK(d.timestamp == doctest::Approx(1.0));

  const auto constant = [](double) { return 1.0; };
  d = operator_derivative(at(2.0 - dt, constant), at(2.0 + dt, constant), dt);
  CHECK(d.matrix.norm() == 0.0);

  const auto quad = [](double t) { return t * t; };
  d = operator_derivative(at(1.0 - dt, quad), at(1.0 + dt, quad), dt);
  CHECK((d.matrix - 2.0 * a).norm() <= 1e-3 * a.norm());
}

TEST_CASE("central difference converges at second order") {
  const MatrixXd a = 0.5 * (random_matrix(5, 5, 37) + random_matrix(5, 5, 37).transpose());
  const auto cubic = [&](double t) {
    GramOperator m;
    m.matrix = t * t * t * a;
    m.timestamp = t;
    return m;
  };
  const MatrixXd exact = 3.0 * a;  // at t = 1
  const auto err = [&](double dt) {
    return (operator_derivative(cubic(1.0 - dt), cubic(1.0 + dt), dt).matrix - exact).norm();
  };
  CHECK(err(0.02) / err(0.01) >= 3.5);
}

#include "doctest.h"

#include "shellflow/modes.hpp"
#include "shellflow/netlab.hpp"
#include "shellflow/operator.hpp"

#include <Eigen/QR>
#include <cmath>

using namespace shellflow;

namespace {

MatrixXd random_orthogonal(int n, std::uint64_t seed) {
  std::mt19937_64 rng = seeded_rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = normal(rng);
  return Eigen::HouseholderQR<MatrixXd>(m).householderQ();
}

MatrixXd random_symmetric(int n, std::uint64_t seed) {
  std::mt19937_64 rng = seeded_rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = normal(rng);
  return 0.5 * (m + m.transpose());
}

SpectralSnapshot synthetic_snapshot(const VectorXd& eigenvalues, const MatrixXd& basis, double t = 0.0) {
  SpectralSnapshot snap;
  snap.timestamp = t;
  snap.eigenvalues = eigenvalues;
  snap.eigenvectors = basis;
  snap.rank = static_cast<int>(eigenvalues.size());
  snap.min_gap = 1.0;
  return snap;
}

VectorXd random_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng = seeded_rng(seed);
  std::normal_distribution<double> normal;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// Smooth analytic operator path: drifting eigenbasis (Givens rotations with
// incommensurate rates) over a fixed well-gapped spectrum.
struct RotatingOperator {
  VectorXd lambdas;
  int n;

  MatrixXd basis(double t) const {
    MatrixXd r = MatrixXd::Identity(n, n);
    for (int k = 0; k + 1 < n; ++k) {
      const double a = 0.3 * std::sin((0.7 + 0.13 * k) * t + 0.2 * k);
      MatrixXd g = MatrixXd::Identity(n, n);
      g(k, k) = std::cos(a);
      g(k + 1, k + 1) = std::cos(a);
      g(k, k + 1) = -std::sin(a);
      g(k + 1, k) = std::sin(a);
      r = r * g;
    }
    return r;
  }

  MatrixXd matrix(double t) const {
    const MatrixXd r = basis(t);
    return r * lambdas.asDiagonal() * r.transpose();
  }
};

// Integrate e' = -M(t) e with classical RK4 on the analytic operator.
VectorXd integrate_error(const RotatingOperator& op, VectorXd e, double t0, double t1, int substeps) {
  const double h = (t1 - t0) / substeps;
  double t = t0;
  for (int k = 0; k < substeps; ++k) {
    const VectorXd k1 = -op.matrix(t) * e;
    const VectorXd k2 = -op.matrix(t + 0.5 * h) * (e + 0.5 * h * k1);
    const VectorXd k3 = -op.matrix(t + 0.5 * h) * (e + 0.5 * h * k2);
    const VectorXd k4 = -op.matrix(t + h) * (e + h * k3);
    e += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
  }
  return e;
}

// Full measurement pipeline along the analytic trajectory: snapshots, chained
// alignment, central-difference operator derivative, couplings, amplitudes.
ModeTrajectory build_trajectory(const RotatingOperator& op, const VectorXd& e0, double dt,
                                int steps, double gap_floor) {
  const VectorXd w = VectorXd::Constant(op.n, 1.0 / op.n);
  ModeTrajectory traj;
  VectorXd e = e0;
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    if (k > 0) e = integrate_error(op, e, (k - 1) * dt, t, 4);
    GramOperator m{op.matrix(t), t};
    SpectralSnapshot snap = eigensystem(m, 1e-12);
    if (!traj.snapshots.empty()) snap = align_snapshots(traj.snapshots.back(), snap);
    ErrorVector err{e, t};
    traj.errors.push_back(err);
    traj.snapshots.push_back(snap);
    traj.modes.push_back(amplitudes(err, snap, w));
    traj.couplings.push_back(CouplingMatrix{});  // filled below
  }
  for (int k = 1; k < steps; ++k) {
    GramOperator prev{op.matrix((k - 1) * dt), (k - 1) * dt};
    GramOperator next{op.matrix((k + 1) * dt), (k + 1) * dt};
    traj.couplings[k] = coupling_matrix(traj.snapshots[k], operator_derivative(prev, next, dt),
                                        gap_floor);
  }
  traj.couplings[0] = traj.couplings[1];
  traj.couplings[steps] = traj.couplings[steps - 1];
  return traj;
}

}  // namespace

TEST_CASE("amplitudes: basis alignment and Parseval on the span") {
  const int n = 7;
  const MatrixXd q = random_orthogonal(n, 3);
  const VectorXd lam = (VectorXd(7) << 7, 5, 4, 3, 2, 1, 0.5).finished();
  const SpectralSnapshot snap = synthetic_snapshot(lam, q);
  const VectorXd w = VectorXd::Constant(n, 1.0 / n);

  // e = 3 * phi_1 in the sample basis: values = 3 * D^{-1/2} psi_1
  ErrorVector e;
  e.values = 3.0 * (q.col(1).array() / w.array().sqrt()).matrix();
  e.timestamp = 0.0;
  const ModeState g = amplitudes(e, snap, w);
  CHECK(g.amplitudes(1) == doctest::Approx(3.0).epsilon(1e-12));
  for (int u = 0; u < n; ++u)
    if (u != 1) CHECK(std::abs(g.amplitudes(u)) <= 1e-12);

  // orthogonal to a truncated span -> zero amplitudes
  SpectralSnapshot trunc = snap;
  trunc.rank = 4;
  trunc.eigenvalues = lam.head(4);
  trunc.eigenvectors = q.leftCols(4);
  ErrorVector perp;
  perp.values = (q.col(5).array() / w.array().sqrt()).matrix();
  perp.timestamp = 0.0;
  CHECK(amplitudes(perp, trunc, w).amplitudes.cwiseAbs().maxCoeff() <= 1e-12);

  // Parseval against an explicit projection oracle
  ErrorVector rnd;
  rnd.values = random_vector(n, 9);
  rnd.timestamp = 0.0;
  const ModeState gr = amplitudes(rnd, trunc, w);
  const VectorXd e_sym = (w.array().sqrt() * rnd.values.array()).matrix();
  const VectorXd projected = trunc.eigenvectors * (trunc.eigenvectors.transpose() * e_sym);
  CHECK(relative_diff(gr.amplitudes.squaredNorm(), projected.squaredNorm()) <= 1e-10);
}

TEST_CASE("coupling_matrix: zero derivative, antisymmetry, worked 2x2 case") {
  const int n = 5;
  const SpectralSnapshot snap =
      synthetic_snapshot((VectorXd(5) << 5, 4, 3, 2, 1).finished(), random_orthogonal(n, 5));

  OperatorDerivative zero{MatrixXd::Zero(n, n), 0.0, OperatorDerivative::Method::CentralDiff};
  CHECK(coupling_matrix(snap, zero, 1e-8).entries.norm() == 0.0);

  OperatorDerivative rnd{random_symmetric(n, 6), 0.0, OperatorDerivative::Method::CentralDiff};
  const CouplingMatrix om = coupling_matrix(snap, rnd, 1e-8);
  CHECK((om.entries + om.entries.transpose()).norm() == 0.0);  // exact
  CHECK(om.entries.diagonal().norm() == 0.0);

  // lambda = (2, 1), Mdot = [[0,1],[1,0]], coordinate eigenbasis
  const SpectralSnapshot two =
      synthetic_snapshot((VectorXd(2) << 2, 1).finished(), MatrixXd::Identity(2, 2));
  MatrixXd md(2, 2);
  md << 0, 1, 1, 0;
  OperatorDerivative d{md, 0.0, OperatorDerivative::Method::CentralDiff};
  const CouplingMatrix om2 = coupling_matrix(two, d, 1e-8);
  CHECK(om2.entries(0, 1) == doctest::Approx(-1.0));
  CHECK(om2.entries(1, 0) == doctest::Approx(1.0));

  ModeState g;
  g.amplitudes = VectorXd::Ones(2);
  const VectorXd rhs = mode_ode_rhs(g, two, om2);
  CHECK(rhs(0) == doctest::Approx(-1.0));
  CHECK(rhs(1) == doctest::Approx(-2.0));
}

TEST_CASE("coupling_matrix masks near-degenerate pairs") {
  const SpectralSnapshot snap = synthetic_snapshot(
      (VectorXd(3) << 2.0, 1.0 + 1e-12, 1.0).finished(), random_orthogonal(3, 7));
  OperatorDerivative d{random_symmetric(3, 8), 0.0, OperatorDerivative::Method::CentralDiff};
  const CouplingMatrix om = coupling_matrix(snap, d, 1e-6);
  CHECK(om.masked_pairs == 1);
  CHECK(om.gap_mask(1, 2));
  CHECK(om.entries(1, 2) == 0.0);
}

TEST_CASE("mode_ode_rhs: pure dissipation and zero state") {
  const int n = 4;
  const SpectralSnapshot snap =
      synthetic_snapshot((VectorXd(4) << 4, 3, 2, 1).finished(), random_orthogonal(n, 11));
  CouplingMatrix zero;
  zero.entries = MatrixXd::Zero(n, n);
  zero.gap_mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);

  ModeState g;
  g.amplitudes = random_vector(n, 12);
  const VectorXd rhs = mode_ode_rhs(g, snap, zero);
  CHECK((rhs + snap.eigenvalues.cwiseProduct(g.amplitudes)).norm() <= 1e-15);

  g.amplitudes.setZero();
  CHECK(mode_ode_rhs(g, snap, zero).norm() == 0.0);
}

TEST_CASE("coupling contributes nothing to total quadratic energy") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int n = 8;
    VectorXd lam(n);
    for (int i = 0; i < n; ++i) lam(i) = std::pow(2.0, 3 - i);
    const SpectralSnapshot snap = synthetic_snapshot(lam, random_orthogonal(n, 100 + seed));
    OperatorDerivative d{random_symmetric(n, 200 + seed), 0.0,
                         OperatorDerivative::Method::CentralDiff};
    const CouplingMatrix om = coupling_matrix(snap, d, 1e-10);
    ModeState g;
    g.amplitudes = random_vector(n, 300 + seed);
    const VectorXd rhs = mode_ode_rhs(g, snap, om);
    const double dissip = (lam.array() * g.amplitudes.array().square()).sum();
    CHECK(std::abs(g.amplitudes.dot(rhs) + dissip) <= 1e-10 * dissip);
  }
}

TEST_CASE("ode_residual is second order on an analytic drifting operator") {
  RotatingOperator op;
  op.n = 6;
  op.lambdas = (VectorXd(6) << 6.0, 3.5, 2.0, 1.2, 0.7, 0.4).finished();
  const VectorXd e0 = random_vector(op.n, 17);

  const double dt = 1e-4;
  const ModeTrajectory traj = build_trajectory(op, e0, dt, 40, 1e-8);
  const ResidualReport report = ode_residual(traj, dt);
  CHECK(report.excluded_steps == 0);
  CHECK(report.rms_rel <= 1e-6);

  const ModeTrajectory coarse = build_trajectory(op, e0, 2.0 * dt, 20, 1e-8);
  const ResidualReport coarse_report = ode_residual(coarse, 2.0 * dt);
  CHECK(coarse_report.rms_rel / report.rms_rel >= 3.5);
}

TEST_CASE("frozen random-features operator decays mode-by-mode") {
  ModelSpec rf;
  rf.kind = ModelKind::RandomFeatures;
  rf.layer_widths = {2};
  rf.feature_count = 24;
  rf.seed = 19;
  std::mt19937_64 rng = seeded_rng(23);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  MatrixXd x(10, 2);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = unif(rng);
    x(i, 1) = unif(rng);
  }
  VectorXd y(10);
  for (int i = 0; i < 10; ++i) y(i) = std::sin(2.0 * x(i, 0)) * std::cos(x(i, 1));
  SampleSet samples = SampleSet::with_uniform_weights(x, y);

  NetworkState net = init_network(rf);
  const VectorXd w = samples.weights;
  const GramOperator m0 = gram_operator(jacobian(net, samples), w, 0.0);
  // keep only modes whose lambda g stays above the finite-difference noise floor
  const SpectralSnapshot snap0 = eigensystem(m0, 1e-3);
  const double lambda_max = snap0.eigenvalues(0);

  const double dt = 1e-4 / lambda_max;
  const int steps = 400;
  ModeTrajectory traj;
  NetworkState cur = net;
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    const ErrorVector e = error_vector(cur, samples, t);
    GramOperator m = gram_operator(jacobian(cur, samples), w, t);
    SpectralSnapshot snap = eigensystem(m, 1e-3);
    if (!traj.snapshots.empty()) snap = align_snapshots(traj.snapshots.back(), snap);
    traj.errors.push_back(e);
    traj.snapshots.push_back(snap);
    traj.modes.push_back(amplitudes(e, snap, w));
    if (k < steps) cur = gradient_flow_step(cur, samples, dt, Integrator::Rk4).net;
  }
  for (int k = 0; k <= steps; ++k) {
    const int prev = std::max(k - 1, 0), next = std::min(k + 1, steps);
    if (next - prev == 2) {
      GramOperator mp{m0.matrix, traj.errors[prev].timestamp};
      GramOperator mn{m0.matrix, traj.errors[next].timestamp};
      traj.couplings.push_back(coupling_matrix(traj.snapshots[k], operator_derivative(mp, mn, dt),
                                               1e-9 * lambda_max));
    } else {
      CouplingMatrix om;
      om.entries = MatrixXd::Zero(traj.snapshots[k].rank, traj.snapshots[k].rank);
      om.gap_mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
          traj.snapshots[k].rank, traj.snapshots[k].rank, false);
      traj.couplings.push_back(om);
    }
  }

  const ResidualReport report = ode_residual(traj, dt);
  CHECK(report.rms_rel <= 1e-8);

  // closed form g_u(t) = g_u(0) exp(-lambda_u t) at the final step
  const ModeState& g0 = traj.modes.front();
  const ModeState& gT = traj.modes.back();
  const double t_end = steps * dt;
  for (int u = 0; u < snap0.rank; ++u) {
    const double expect = g0.amplitudes(u) * std::exp(-snap0.eigenvalues(u) * t_end);
    CHECK(std::abs(gT.amplitudes(u) - expect) <=
          1e-6 * std::max(std::abs(expect), 1e-12 * g0.amplitudes.norm()));
  }
}

TEST_CASE("ode_residual: constant error with zero operator reports zero") {
  ModeTrajectory traj;
  const int n = 4;
  for (int k = 0; k < 5; ++k) {
    GramOperator m{MatrixXd::Zero(n, n), k * 0.1};
    SpectralSnapshot snap = eigensystem(m);  // rank 0
    ErrorVector e{VectorXd::Ones(n), k * 0.1};
    traj.errors.push_back(e);
    traj.snapshots.push_back(snap);
    traj.modes.push_back(amplitudes(e, snap, VectorXd::Constant(n, 0.25)));
    CouplingMatrix om;
    om.entries = MatrixXd::Zero(0, 0);
    om.gap_mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(0, 0, false);
    traj.couplings.push_back(om);
  }
  const ResidualReport report = ode_residual(traj, 0.1);
  CHECK(report.rms_rel == 0.0);
  CHECK(report.max_rel == 0.0);
}

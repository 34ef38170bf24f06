#include "shellflow/operator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shellflow {

namespace {

// Copy the lower triangle over the upper one so symmetry holds bit-exactly.
void mirror_lower(MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = j + 1; i < m.rows(); ++i) m(j, i) = m(i, j);
}

}  // namespace

GramOperator gram_operator(const MatrixXd& jac, const VectorXd& weights, double t) {
  if (jac.rows() != weights.size())
    throw ConfigError("gram_operator: weights/jacobian size mismatch");
  if ((weights.array() <= 0.0).any())
    throw ConfigError("gram_operator: weights must be strictly positive");

  const MatrixXd scaled = weights.array().sqrt().matrix().asDiagonal() * jac;
  GramOperator m;
  m.matrix = MatrixXd::Zero(jac.rows(), jac.rows());
  m.matrix.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
  mirror_lower(m.matrix);
  m.timestamp = t;
  return m;
}

VectorXd SpectralSnapshot::eigenvector_in_sample_basis(int u, const VectorXd& weights) const {
  if (u < 0 || u >= rank) throw ConfigError("eigenvector_in_sample_basis: index out of range");
  return eigenvectors.col(u).array() / weights.array().sqrt();
}

SpectralSnapshot eigensystem(const GramOperator& m, double rank_tol) {
  if (rank_tol < 0.0) throw ConfigError("eigensystem: rank_tol must be >= 0");
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(m.matrix);
  if (solver.info() != Eigen::Success)
    throw DivergenceError("eigensystem: eigensolver failed to converge");

  const Eigen::Index n = m.matrix.rows();
  const VectorXd evals_asc = solver.eigenvalues();
  const double lambda_max = n > 0 ? evals_asc(n - 1) : 0.0;
  if (n > 0 && evals_asc(0) < -1e-10 * std::max(lambda_max, 0.0))
    throw CheckError("eigensystem: operator is not numerically PSD");

  const double cutoff = rank_tol * std::max(lambda_max, 0.0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (evals_asc(i) > cutoff || (rank_tol == 0.0 && evals_asc(i) > 0.0)) ++r;

  SpectralSnapshot snap;
  snap.timestamp = m.timestamp;
  snap.rank = static_cast<int>(r);
  snap.eigenvalues.resize(r);
  snap.eigenvectors.resize(n, r);
  for (Eigen::Index k = 0; k < r; ++k) {
    const Eigen::Index src = n - 1 - k;  // descending
    snap.eigenvalues(k) = evals_asc(src);
    snap.eigenvectors.col(k) = solver.eigenvectors().col(src);
  }

  snap.min_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < r; ++k)
    snap.min_gap = std::min(snap.min_gap, snap.eigenvalues(k) - snap.eigenvalues(k + 1));
  return snap;
}

SpectralSnapshot align_snapshots(const SpectralSnapshot& prev, const SpectralSnapshot& cur,
                                 double overlap_floor) {
  if (prev.eigenvectors.rows() != cur.eigenvectors.rows())
    throw ConfigError("align_snapshots: ambient dimension mismatch");

  const int rp = prev.rank;
  const int rc = cur.rank;
  const MatrixXd overlap = prev.eigenvectors.transpose() * cur.eigenvectors;  // rp x rc

  // Greedy maximal-|overlap| matching: repeatedly take the strongest unmatched
  // (prev, cur) pair. Near-crossings are detected via the resulting floor
  // violation rather than resolved.
  std::vector<int> match_for_prev(rp, -1);
  std::vector<bool> cur_used(rc, false);
  const int pairs = std::min(rp, rc);
  for (int k = 0; k < pairs; ++k) {
    double best = -1.0;
    int bi = -1, bj = -1;
    for (int i = 0; i < rp; ++i) {
      if (match_for_prev[i] >= 0) continue;
      for (int j = 0; j < rc; ++j) {
        if (cur_used[j]) continue;
        const double a = std::abs(overlap(i, j));
        if (a > best) {
          best = a;
          bi = i;
          bj = j;
        }
      }
    }
    match_for_prev[bi] = bj;
    cur_used[bj] = true;
  }

  SpectralSnapshot aligned;
  aligned.timestamp = cur.timestamp;
  aligned.rank = rc;
  aligned.eigenvalues.resize(rc);
  aligned.eigenvectors.resize(cur.eigenvectors.rows(), rc);
  aligned.min_gap = cur.min_gap;

  AlignmentInfo info;
  info.permutation.resize(rc);
  info.signs.resize(rc);
  info.rank_changed = (rp != rc);
  info.min_overlap = 1.0;

  int out = 0;
  // Matched prev slots first, in prev order; surplus current columns follow in
  // their original (descending eigenvalue) order.
  for (int i = 0; i < rp && out < rc; ++i) {
    const int j = match_for_prev[i];
    if (j < 0) continue;
    const double o = overlap(i, j);
    info.permutation[out] = j;
    info.signs[out] = (o < 0.0) ? -1 : 1;
    info.min_overlap = std::min(info.min_overlap, std::abs(o));
    aligned.eigenvalues(out) = cur.eigenvalues(j);
    aligned.eigenvectors.col(out) = cur.eigenvectors.col(j) * static_cast<double>(info.signs[out]);
    ++out;
  }
  for (int j = 0; j < rc && out < rc; ++j) {
    if (cur_used[j]) continue;
    info.permutation[out] = j;
    info.signs[out] = 1;
    aligned.eigenvalues(out) = cur.eigenvalues(j);
    aligned.eigenvectors.col(out) = cur.eigenvectors.col(j);
    ++out;
  }

  info.usable = !info.rank_changed && info.min_overlap >= overlap_floor;
  aligned.alignment = info;
  return aligned;
}

OperatorDerivative operator_derivative(const GramOperator& m_prev, const GramOperator& m_next,
                                       double dt) {
  if (!(dt > 0.0)) throw ConfigError("operator_derivative: dt must be positive");
  if (m_prev.matrix.rows() != m_next.matrix.rows())
    throw ConfigError("operator_derivative: dimension mismatch");
  const double span = m_next.timestamp - m_prev.timestamp;
  if (std::abs(span - 2.0 * dt) > 1e-9 * std::max(1.0, 2.0 * dt))
    throw ConfigError("operator_derivative: timestamps must straddle the midpoint by dt");

  OperatorDerivative d;
  d.matrix = (m_next.matrix - m_prev.matrix) / (2.0 * dt);
  mirror_lower(d.matrix);
  d.timestamp = 0.5 * (m_prev.timestamp + m_next.timestamp);
  d.method = OperatorDerivative::Method::CentralDiff;
  return d;
}

}  // namespace shellflow

#include "shellflow/modes.hpp"

#include <cmath>

namespace shellflow {

ModeState amplitudes(const ErrorVector& e, const SpectralSnapshot& snap, const VectorXd& weights) {
  if (e.values.size() != snap.eigenvectors.rows() || e.values.size() != weights.size())
    throw ConfigError("amplitudes: dimension mismatch");
  ModeState state;
  state.timestamp = e.timestamp;
  const VectorXd e_sym = weights.array().sqrt() * e.values.array();
  state.amplitudes = snap.eigenvectors.transpose() * e_sym;
  return state;
}

CouplingMatrix coupling_matrix(const SpectralSnapshot& snap, const OperatorDerivative& mdot,
                               double gap_floor) {
  if (!(gap_floor > 0.0)) throw ConfigError("coupling_matrix: gap_floor must be positive");
  if (snap.eigenvectors.rows() != mdot.matrix.rows())
    throw ConfigError("coupling_matrix: dimension mismatch");

  const int r = snap.rank;
  CouplingMatrix omega;
  omega.entries = MatrixXd::Zero(r, r);
  omega.gap_mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(r, r, false);
  omega.gap_floor = gap_floor;

  const MatrixXd b = snap.eigenvectors.transpose() * mdot.matrix * snap.eigenvectors;
  for (int u = 0; u < r; ++u) {
    for (int v = u + 1; v < r; ++v) {
      const double den = snap.eigenvalues(v) - snap.eigenvalues(u);
      if (std::abs(den) < gap_floor) {
        omega.gap_mask(u, v) = omega.gap_mask(v, u) = true;
        ++omega.masked_pairs;
        continue;
      }
      // One numerator per unordered pair keeps the antisymmetry exact.
      const double num = 0.5 * (b(u, v) + b(v, u));
      omega.entries(u, v) = num / den;
      omega.entries(v, u) = -omega.entries(u, v);
    }
  }
  return omega;
}

VectorXd mode_ode_rhs(const ModeState& g, const SpectralSnapshot& snap, const CouplingMatrix& omega) {
  const int r = snap.rank;
  if (g.amplitudes.size() != r || omega.entries.rows() != r)
    throw ConfigError("mode_ode_rhs: inconsistent indexing");
  return (-snap.eigenvalues.array() * g.amplitudes.array()).matrix() - omega.entries * g.amplitudes;
}

bool ModeTrajectory::step_usable(std::size_t k) const {
  return snapshots[k].alignment.usable && couplings[k].masked_pairs == 0;
}

ResidualReport ode_residual(const ModeTrajectory& traj, double dt, double floor) {
  const std::size_t steps = traj.size();
  if (steps < 3) throw ConfigError("ode_residual: need at least 3 consecutive steps");
  if (!(dt > 0.0)) throw ConfigError("ode_residual: dt must be positive");

  ResidualReport report;
  report.dt = dt;
  report.floor = floor;

  double sum_sq = 0.0;
  long count = 0;
  VectorXd per_mode_sum;
  Eigen::VectorXi per_mode_count;

  for (std::size_t k = 1; k + 1 < steps; ++k) {
    const int r = traj.snapshots[k].rank;
    // The center needs a trustworthy rhs (no masked pairs); the neighbors only
    // contribute amplitudes, so a clean alignment and matching rank suffice.
    const bool usable = traj.step_usable(k) && traj.snapshots[k - 1].alignment.usable &&
                        traj.snapshots[k + 1].alignment.usable &&
                        traj.snapshots[k - 1].rank == r && traj.snapshots[k + 1].rank == r;
    if (!usable) {
      ++report.excluded_steps;
      continue;
    }
    if (per_mode_sum.size() < r) {
      VectorXd grown = VectorXd::Zero(r);
      grown.head(per_mode_sum.size()) = per_mode_sum;
      per_mode_sum = grown;
      Eigen::VectorXi grown_c = Eigen::VectorXi::Zero(r);
      grown_c.head(per_mode_count.size()) = per_mode_count;
      per_mode_count = grown_c;
    }

    const VectorXd cd = (traj.modes[k + 1].amplitudes - traj.modes[k - 1].amplitudes) / (2.0 * dt);
    const VectorXd rhs = mode_ode_rhs(traj.modes[k], traj.snapshots[k], traj.couplings[k]);
    const double g_norm = traj.modes[k].amplitudes.norm();

    for (int u = 0; u < r; ++u) {
      const double raw = std::abs(cd(u) - rhs(u));
      const double scale = std::abs(traj.snapshots[k].eigenvalues(u) * traj.modes[k].amplitudes(u)) +
                           g_norm * traj.couplings[k].entries.row(u).norm() + floor;
      const double rel = raw / scale;
      report.max_rel = std::max(report.max_rel, rel);
      report.max_raw = std::max(report.max_raw, raw);
      sum_sq += rel * rel;
      ++count;
      per_mode_sum(u) += rel * rel;
      per_mode_count(u) += 1;
    }
    ++report.evaluated_steps;
  }

  if (report.evaluated_steps == 0) throw ConfigError("ode_residual: no usable interior steps");
  report.rms_rel = count > 0 ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0;
  report.per_mode_rms.resize(per_mode_sum.size());
  for (Eigen::Index u = 0; u < per_mode_sum.size(); ++u)
    report.per_mode_rms(u) =
        per_mode_count(u) > 0 ? std::sqrt(per_mode_sum(u) / per_mode_count(u)) : 0.0;
  return report;
}

}  // namespace shellflow

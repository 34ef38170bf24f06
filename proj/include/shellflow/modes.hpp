#pragma once

#include "shellflow/common.hpp"
#include "shellflow/netlab.hpp"
#include "shellflow/operator.hpp"

#include <vector>

namespace shellflow {

/// Error amplitudes g_u = <e, phi_u>_w in the instantaneous (aligned) basis.
struct ModeState {
  double timestamp = 0.0;
  VectorXd amplitudes;
};

ModeState amplitudes(const ErrorVector& e, const SpectralSnapshot& snap, const VectorXd& weights);

/// Eigenbasis-rotation coefficients. entries(u, v) holds the coupling from
/// mode v into mode u, i.e. <phi_u, Mdot phi_v> / (lambda_v - lambda_u), built
/// exactly antisymmetric. Pairs with |lambda_v - lambda_u| below the gap floor
/// are masked (set to zero and recorded) instead of evaluated.
struct CouplingMatrix {
  MatrixXd entries;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> gap_mask;
  double gap_floor = 0.0;
  int masked_pairs = 0;
};

CouplingMatrix coupling_matrix(const SpectralSnapshot& snap, const OperatorDerivative& mdot,
                               double gap_floor);

/// Right-hand side of the coupled mode system:
/// dg_u/dt = -lambda_u g_u - sum_{v != u} g_v * entries(u, v).
VectorXd mode_ode_rhs(const ModeState& g, const SpectralSnapshot& snap, const CouplingMatrix& omega);

/// One trajectory sample per retained timestep; parallel arrays.
struct ModeTrajectory {
  std::vector<ErrorVector> errors;
  std::vector<SpectralSnapshot> snapshots;
  std::vector<ModeState> modes;
  std::vector<CouplingMatrix> couplings;

  std::size_t size() const { return modes.size(); }
  /// A step enters residual statistics only when alignment succeeded and no
  /// retained pair was gap-masked at that step.
  bool step_usable(std::size_t k) const;
};

struct ResidualReport {
  VectorXd per_mode_rms;      // normalized, over evaluated interior steps
  double max_rel = 0.0;
  double rms_rel = 0.0;
  double max_raw = 0.0;
  int evaluated_steps = 0;
  int excluded_steps = 0;
  double dt = 0.0;
  double floor = 0.0;
};

/// Compare central-difference dg/dt against mode_ode_rhs at interior steps.
/// Residuals are normalized by |lambda_u g_u| + ||g|| * ||Omega row u|| + floor.
ResidualReport ode_residual(const ModeTrajectory& traj, double dt, double floor = 1e-12);

}  // namespace shellflow

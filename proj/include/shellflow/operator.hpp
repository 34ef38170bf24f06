#pragma once

#include "shellflow/common.hpp"

#include <vector>

namespace shellflow {

/// The empirical operator M(t) = J J* in the weighted sample geometry, stored
/// in the symmetrized basis D^{1/2} J J^T D^{1/2} so that self-adjointness in
/// L2(w) becomes ordinary matrix symmetry.
struct GramOperator {
  MatrixXd matrix;
  double timestamp = 0.0;
};

GramOperator gram_operator(const MatrixXd& jac, const VectorXd& weights, double t);

/// Bookkeeping attached by align_snapshots. `usable` is cleared when the
/// overlap with the previous basis falls under the floor or the retained rank
/// changed; such steps are excluded from ODE-residual statistics downstream.
struct AlignmentInfo {
  std::vector<int> permutation;  // aligned column i came from raw column permutation[i]
  std::vector<int> signs;        // +1 / -1 applied after permuting
  double min_overlap = 1.0;
  bool rank_changed = false;
  bool usable = true;
};

struct SpectralSnapshot {
  double timestamp = 0.0;
  VectorXd eigenvalues;    // retained modes, descending at construction
  MatrixXd eigenvectors;   // n x r, orthonormal columns in the symmetrized basis
  int rank = 0;
  AlignmentInfo alignment;
  double min_gap = 0.0;    // smallest |lambda_u - lambda_v| over retained pairs

  /// Eigenvector mapped back to the plain sample basis (phi = D^{-1/2} psi).
  VectorXd eigenvector_in_sample_basis(int u, const VectorXd& weights) const;
};

/// Full symmetric eigendecomposition; eigenvalues below rank_tol * lambda_max
/// are truncated from the retained rank. Throws DivergenceError if the solver
/// fails, CheckError if M is not numerically PSD.
SpectralSnapshot eigensystem(const GramOperator& m, double rank_tol = 1e-12);

/// Permute and sign-fix `cur` so its columns continue `prev`: greedy maximal
/// |<phi_prev, phi_cur>| matching, diagonal overlaps made nonnegative.
SpectralSnapshot align_snapshots(const SpectralSnapshot& prev, const SpectralSnapshot& cur,
                                 double overlap_floor = 0.5);

struct OperatorDerivative {
  enum class Method { CentralDiff, Directional };
  MatrixXd matrix;
  double timestamp = 0.0;
  Method method = Method::CentralDiff;
};

/// Central-difference estimate (M_next - M_prev) / (2 dt); the timestamps must
/// straddle the midpoint by exactly dt.
OperatorDerivative operator_derivative(const GramOperator& m_prev, const GramOperator& m_next,
                                       double dt);

}  // namespace shellflow

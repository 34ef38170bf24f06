#pragma once

#include "shellflow/common.hpp"
#include "shellflow/modes.hpp"
#include "shellflow/operator.hpp"

#include <vector>

namespace shellflow {

/// Logarithmic partition of the positive spectrum: shell alpha covers
/// [lambda0 * q^alpha, lambda0 * q^(alpha+1)). The alpha range spans the
/// occupied shells; empty shells in between are kept with zeros.
struct ShellPartition {
  double lambda0 = 1.0;
  double q = 2.0;
  int alpha_min = 0;
  int alpha_max = -1;  // empty range when alpha_max < alpha_min

  int count() const { return alpha_max - alpha_min + 1; }
  int index_of(int alpha) const { return alpha - alpha_min; }
  double lower_edge(int alpha) const;
};

/// Shell index of a positive eigenvalue under the half-open convention.
int shell_index(double lambda, double lambda0, double q);

/// Assign every retained mode to its shell. Throws ConfigError when a retained
/// eigenvalue is not strictly positive.
std::pair<ShellPartition, std::vector<int>> partition(const SpectralSnapshot& snap,
                                                      double lambda0, double q);

/// E_alpha = 1/2 sum_{u in S_alpha} g_u^2, one entry per shell in the range.
VectorXd shell_energies(const ModeState& g, const ShellPartition& part,
                        const std::vector<int>& membership);

/// D_alpha = sum_{u in S_alpha} lambda_u g_u^2.
VectorXd dissipation(const ModeState& g, const SpectralSnapshot& snap, const ShellPartition& part,
                     const std::vector<int>& membership);

/// Pairwise quadratic-energy exchange: entry (a, b) holds the flux from shell
/// (alpha_min + b) into shell (alpha_min + a), exactly antisymmetric; the
/// diagonal stays zero (shell-internal coupling is checked separately).
MatrixXd intershell_flux(const ModeState& g, const CouplingMatrix& omega, const ShellPartition& part,
                         const std::vector<int>& membership);

/// Per-shell sums of the internal coupling terms; an exact cancellation makes
/// these vanish in exact arithmetic. Second return holds the gross magnitude
/// sums the cancellation is measured against.
std::pair<VectorXd, VectorXd> internal_coupling_sum(const ModeState& g, const CouplingMatrix& omega,
                                                    const ShellPartition& part,
                                                    const std::vector<int>& membership);

/// Cumulative boundary flux J_{<=alpha}: total flow from all shells above
/// alpha into all shells at or below alpha.
double cumulative_flux(const MatrixXd& flux, const ShellPartition& part, int alpha);

/// Complete per-timestep energy bookkeeping.
struct ShellLedger {
  double timestamp = 0.0;
  ShellPartition part;
  std::vector<int> membership;   // mode -> absolute shell index alpha
  VectorXd energies;             // E_alpha
  VectorXd dissipations;         // D_alpha
  MatrixXd flux;                 // F_{beta->alpha}, see intershell_flux
  VectorXd cumulative;           // J_{<=alpha} per shell boundary
  bool usable = true;            // alignment clean and no gap-masked pairs

  double total_energy() const { return energies.sum(); }
  VectorXd net_flux() const;    // sum_beta F_{beta->alpha} per shell
};

ShellLedger make_ledger(const ModeState& g, const SpectralSnapshot& snap,
                        const CouplingMatrix& omega, double lambda0, double q);

struct BalanceReport {
  double max_residual = 0.0;          // raw units of dE/dt
  double rms_residual = 0.0;
  double max_residual_rel = 0.0;      // normalized per step by max_alpha D_alpha
  double rms_residual_rel = 0.0;
  int evaluated_steps = 0;
  int flagged_steps = 0;              // membership changed or alignment unusable
  double dt = 0.0;
};

/// Audit of dE_alpha/dt + D_alpha - net flux over a ledger trajectory with
/// uniform spacing dt. Stencils whose membership changed (a mode crossed a
/// shell boundary) are flagged and skipped.
BalanceReport balance_audit(const std::vector<ShellLedger>& trajectory, double dt);

}  // namespace shellflow

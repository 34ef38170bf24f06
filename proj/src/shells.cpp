#include "shellflow/shells.hpp"

#include <cmath>

namespace shellflow {

double ShellPartition::lower_edge(int alpha) const {
  return lambda0 * std::pow(q, static_cast<double>(alpha));
}

int shell_index(double lambda, double lambda0, double q) {
  if (!(lambda > 0.0)) throw ConfigError("shell_index: eigenvalue must be positive");
  if (!(lambda0 > 0.0) || !(q > 1.0)) throw ConfigError("shell_index: need lambda0 > 0 and q > 1");
  int alpha = static_cast<int>(std::floor(std::log(lambda / lambda0) / std::log(q)));
  // Enforce the half-open convention against pow/log rounding at exact edges.
  while (lambda < lambda0 * std::pow(q, alpha)) --alpha;
  while (lambda >= lambda0 * std::pow(q, alpha + 1)) ++alpha;
  return alpha;
}

std::pair<ShellPartition, std::vector<int>> partition(const SpectralSnapshot& snap,
                                                      double lambda0, double q) {
  ShellPartition part;
  part.lambda0 = lambda0;
  part.q = q;
  std::vector<int> membership(snap.rank);
  for (int u = 0; u < snap.rank; ++u) {
    membership[u] = shell_index(snap.eigenvalues(u), lambda0, q);
    if (u == 0) {
      part.alpha_min = part.alpha_max = membership[u];
    } else {
      part.alpha_min = std::min(part.alpha_min, membership[u]);
      part.alpha_max = std::max(part.alpha_max, membership[u]);
    }
  }
  if (snap.rank == 0) {
    part.alpha_min = 0;
    part.alpha_max = -1;
  }
  return {part, membership};
}

VectorXd shell_energies(const ModeState& g, const ShellPartition& part,
                        const std::vector<int>& membership) {
  if (static_cast<int>(membership.size()) != g.amplitudes.size())
    throw ConfigError("shell_energies: inconsistent indexing");
  VectorXd e = VectorXd::Zero(std::max(part.count(), 0));
  for (std::size_t u = 0; u < membership.size(); ++u)
    e(part.index_of(membership[u])) += 0.5 * g.amplitudes(u) * g.amplitudes(u);
  return e;
}

VectorXd dissipation(const ModeState& g, const SpectralSnapshot& snap, const ShellPartition& part,
                     const std::vector<int>& membership) {
  if (static_cast<int>(membership.size()) != g.amplitudes.size() ||
      g.amplitudes.size() != snap.rank)
    throw ConfigError("dissipation: inconsistent indexing");
  VectorXd d = VectorXd::Zero(std::max(part.count(), 0));
  for (std::size_t u = 0; u < membership.size(); ++u)
    d(part.index_of(membership[u])) += snap.eigenvalues(u) * g.amplitudes(u) * g.amplitudes(u);
  return d;
}

MatrixXd intershell_flux(const ModeState& g, const CouplingMatrix& omega, const ShellPartition& part,
                         const std::vector<int>& membership) {
  const int r = static_cast<int>(membership.size());
  if (g.amplitudes.size() != r || omega.entries.rows() != r)
    throw ConfigError("intershell_flux: inconsistent indexing");
  const int ns = std::max(part.count(), 0);
  MatrixXd flux = MatrixXd::Zero(ns, ns);

  // One pass per unordered shell pair: F_{beta->alpha} computed once and
  // mirrored with a sign, so action-reaction holds exactly.
  for (int u = 0; u < r; ++u) {
    const int a = part.index_of(membership[u]);
    for (int v = 0; v < r; ++v) {
      const int bsh = part.index_of(membership[v]);
      if (bsh <= a) continue;  // handle each unordered pair once, diagonal never stored
      const double term = -g.amplitudes(v) * g.amplitudes(u) * omega.entries(u, v);
      flux(a, bsh) += term;
    }
  }
  for (int a = 0; a < ns; ++a)
    for (int b = a + 1; b < ns; ++b) flux(b, a) = -flux(a, b);
  return flux;
}

std::pair<VectorXd, VectorXd> internal_coupling_sum(const ModeState& g, const CouplingMatrix& omega,
                                                    const ShellPartition& part,
                                                    const std::vector<int>& membership) {
  const int r = static_cast<int>(membership.size());
  if (g.amplitudes.size() != r || omega.entries.rows() != r)
    throw ConfigError("internal_coupling_sum: inconsistent indexing");
  const int ns = std::max(part.count(), 0);
  VectorXd sums = VectorXd::Zero(ns);
  VectorXd gross = VectorXd::Zero(ns);
  // The full ordered double sum, kept deliberately naive: this is the quantity
  // whose cancellation the ledger asserts.
  for (int u = 0; u < r; ++u) {
    for (int v = 0; v < r; ++v) {
      if (u == v || membership[u] != membership[v]) continue;
      const int a = part.index_of(membership[u]);
      const double term = g.amplitudes(v) * g.amplitudes(u) * omega.entries(u, v);
      sums(a) += term;
      gross(a) += std::abs(term);
    }
  }
  return {sums, gross};
}

double cumulative_flux(const MatrixXd& flux, const ShellPartition& part, int alpha) {
  if (flux.rows() != part.count() || flux.cols() != part.count())
    throw ConfigError("cumulative_flux: flux/partition mismatch");
  double j = 0.0;
  for (int gidx = 0; gidx < part.count(); ++gidx) {
    const int gamma = part.alpha_min + gidx;
    if (gamma > alpha) continue;
    for (int bidx = 0; bidx < part.count(); ++bidx) {
      const int beta = part.alpha_min + bidx;
      if (beta <= alpha) continue;
      j += flux(gidx, bidx);
    }
  }
  return j;
}

VectorXd ShellLedger::net_flux() const {
  if (flux.rows() == 0) return VectorXd::Zero(energies.size());
  return flux.rowwise().sum();
}

ShellLedger make_ledger(const ModeState& g, const SpectralSnapshot& snap,
                        const CouplingMatrix& omega, double lambda0, double q) {
  ShellLedger ledger;
  ledger.timestamp = g.timestamp;
  auto [part, membership] = partition(snap, lambda0, q);
  ledger.part = part;
  ledger.membership = std::move(membership);
  ledger.energies = shell_energies(g, ledger.part, ledger.membership);
  ledger.dissipations = dissipation(g, snap, ledger.part, ledger.membership);
  ledger.flux = intershell_flux(g, omega, ledger.part, ledger.membership);
  ledger.cumulative.resize(std::max(ledger.part.count(), 0));
  for (int idx = 0; idx < ledger.part.count(); ++idx)
    ledger.cumulative(idx) = cumulative_flux(ledger.flux, ledger.part, ledger.part.alpha_min + idx);
  ledger.usable = snap.alignment.usable && omega.masked_pairs == 0;
  return ledger;
}

BalanceReport balance_audit(const std::vector<ShellLedger>& trajectory, double dt) {
  if (trajectory.size() < 3) throw ConfigError("balance_audit: need at least 3 ledgers");
  if (!(dt > 0.0)) throw ConfigError("balance_audit: dt must be positive");

  BalanceReport report;
  report.dt = dt;
  double sum_sq = 0.0, sum_sq_rel = 0.0;
  long count = 0;

  for (std::size_t k = 1; k + 1 < trajectory.size(); ++k) {
    const ShellLedger& prev = trajectory[k - 1];
    const ShellLedger& cur = trajectory[k];
    const ShellLedger& next = trajectory[k + 1];
    const bool stable = prev.membership == cur.membership && cur.membership == next.membership &&
                        prev.usable && cur.usable && next.usable;
    if (!stable) {
      ++report.flagged_steps;
      continue;
    }
    const double d_max = cur.dissipations.size() > 0 ? cur.dissipations.maxCoeff() : 0.0;
    const VectorXd net = cur.net_flux();
    for (int a = 0; a < cur.part.count(); ++a) {
      const double de_dt = (next.energies(a) - prev.energies(a)) / (2.0 * dt);
      const double resid = std::abs(de_dt + cur.dissipations(a) - net(a));
      report.max_residual = std::max(report.max_residual, resid);
      sum_sq += resid * resid;
      if (d_max > 0.0) {
        report.max_residual_rel = std::max(report.max_residual_rel, resid / d_max);
        sum_sq_rel += (resid / d_max) * (resid / d_max);
      }
      ++count;
    }
    ++report.evaluated_steps;
  }

  if (report.evaluated_steps == 0) throw ConfigError("balance_audit: all stencils flagged");
  report.rms_residual = std::sqrt(sum_sq / static_cast<double>(count));
  report.rms_residual_rel = std::sqrt(sum_sq_rel / static_cast<double>(count));
  return report;
}

}  // namespace shellflow

#pragma once

#include "shellflow/config.hpp"
#include "shellflow/modes.hpp"
#include "shellflow/netlab.hpp"
#include "shellflow/report.hpp"
#include "shellflow/shells.hpp"
#include "shellflow/transport.hpp"

#include <map>
#include <string>
#include <vector>

namespace shellflow {

struct Dataset {
  SampleSet train;
  SampleSet test;
};

/// Samples, teacher targets, and optional observation noise from the config's
/// seeded generator; train and test are independent draws from the same
/// generator.
Dataset build_dataset(const ExperimentConfig& cfg);

struct MicroOptions {
  bool keep_trajectory = true;  // retain snapshots/couplings/errors for residuals
  bool build_ledgers = true;
};

/// One gradient-flow trajectory pushed through the whole measurement pipeline:
/// Gram operator, aligned eigensystem, couplings from central-difference
/// operator derivatives, amplitudes, and shell ledgers, at the record stride.
struct MicroRun {
  std::vector<double> times;
  std::vector<double> losses;
  std::vector<double> min_gaps;
  std::vector<int> usable;          // alignment ok and no gap-masked pairs
  ModeTrajectory traj;              // modes always kept; rest per MicroOptions
  std::vector<ShellLedger> ledgers;
  double record_dt = 0.0;           // stride * dt
  double lambda0 = 0.0;             // shell reference actually used
  SpectralSnapshot initial_snapshot;
  std::vector<double> internal_rel;     // per record: worst shell-internal sum / gross
  std::vector<double> global_flux_rel;  // per record: |sum F| / sum |F|
};

MicroRun run_micro_trajectory(const ExperimentConfig& cfg, const SampleSet& samples,
                              const MicroOptions& options = {});

struct OdeVerifyResult {
  MicroRun run;
  ResidualReport residual;
  double usable_fraction = 0.0;
};

OdeVerifyResult run_ode_verify(const ExperimentConfig& cfg);
ReportBundle make_report(const OdeVerifyResult& result, const ExperimentConfig& cfg);

struct ShellAuditResult {
  MicroRun run;
  BalanceReport balance;
  double max_internal_rel = 0.0;
  double max_global_flux_rel = 0.0;
  double max_energy_increase = 0.0;          // worst positive jump of total energy
  std::map<int, double> renorm_ratio;        // alpha -> int |J_<=a| dt / int D_a dt
};

ShellAuditResult run_shell_audit(const ExperimentConfig& cfg);
ReportBundle make_report(const ShellAuditResult& result, const ExperimentConfig& cfg);

struct PdeScalingResult {
  // transport-only sweep
  std::vector<double> tail_taus;
  std::vector<TailFit> tail_fits;
  double tail_slope = 0.0;       // fit at the reference tau (middle entry)
  double tail_mass_error = 0.0;
  // dissipative run
  std::vector<double> taus, frontier_series, loss_series;
  ScalingFit frontier_fit, loss_fit, oracle_fit;
  std::vector<double> grsd_taus;
  std::vector<GrsdFit> grsd_fits;
  double k_median = 0.0, a_median = 0.0, grsd_goodness = 0.0;
  double frontier_expected = 0.0;  // -1/(b-1)
  double paper_loss_exponent = 0.0;
  double critical_shrink_rate = 0.0;  // b = 1: d(log lambda*)/d tau
  bool critical = false;
  double mass_out_low = 0.0, mass_in_high = 0.0;
};

PdeScalingResult run_pde_scaling(const ExperimentConfig& cfg);
ReportBundle make_report(const PdeScalingResult& result, const ExperimentConfig& cfg);

struct DoubleDescentRun {
  int feature_count = 0;
  std::uint64_t seed = 0;
  std::vector<double> t, loss_train, loss_test, correction, tail_proxy;
  bool train_monotone = true;
  bool rise_then_fall = false;
  double prominence = 0.0;
  double identity_violation = 0.0;     // max relative |L_te - L_tr - corr|
  double proxy_correlation = 0.0;      // Pearson(corr, tail proxy)
  int tail_alpha0 = 0;
};

struct DoubleDescentResult {
  std::vector<DoubleDescentRun> runs;
  bool all_train_monotone = true;
  double max_identity_violation = 0.0;
  std::map<int, int> rise_fall_count;  // feature count -> #seeds with a bump
};

DoubleDescentResult run_double_descent(const ExperimentConfig& cfg);
ReportBundle make_report(const DoubleDescentResult& result, const ExperimentConfig& cfg);

struct RegimeRow {
  std::string regime;
  double b = 0.0;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct RegimesResult {
  std::vector<RegimeRow> rows;
};

RegimesResult run_regimes(const ExperimentConfig& cfg);
ReportBundle make_report(const RegimesResult& result, const ExperimentConfig& cfg);

/// Dispatch on cfg.experiment, write the bundle under cfg.output_dir.
void run_and_emit(const ExperimentConfig& cfg);

}  // namespace shellflow

#pragma once

#include "shellflow/common.hpp"
#include "shellflow/netlab.hpp"
#include "shellflow/transport.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace shellflow {

/// Flat, typed experiment configuration. Every key in the JSON document must
/// match a field below (unknown keys are rejected); defaults are echoed back
/// into config.resolved.json so runs are reproducible from the output alone.
struct ExperimentConfig {
  std::string experiment = "ode-verify";
  std::string output_dir = "out";
  std::string format = "csv";  // csv | json | plotdata

  // model
  std::string model_kind = "mlp";  // mlp | random-features
  std::vector<int> model_layers{1, 8, 1};
  std::string model_activation = "tanh";  // tanh | relu | identity
  int model_feature_count = 40;
  double model_init_scale = 1.0;
  std::uint64_t model_seed = 1;

  // data
  std::string data_distribution = "uniform-box";
  int data_input_dim = 1;
  int data_n_train = 16;
  int data_n_test = 64;
  std::uint64_t data_seed = 2;
  std::string data_teacher = "sine";  // sine | random-mlp
  std::uint64_t data_teacher_seed = 77;
  double data_teacher_scale = 1.5;
  double data_sine_freq = 0.5;   // frequency of the sine teacher (per unit input)
  double data_noise_sd = 0.0;

  // gradient-flow dynamics
  double dynamics_dt = 1e-3;
  int dynamics_steps = 500;
  int dynamics_stride = 1;
  std::string dynamics_integrator = "rk4";  // euler | rk4
  double dynamics_rank_tol = 1e-4;
  double dynamics_gap_floor_rel = 1e-8;
  double dynamics_overlap_floor = 0.5;

  // shells
  double shells_q = 2.0;
  double shells_lambda0 = 0.0;  // 0 -> snap the median eigenvalue to a power of q
  int shells_ledger_stride = 1;
  int shells_emit_max = 200;    // cap on emitted per-timestep ledger files

  // drift / transport
  double drift_b = 3.0;
  std::string drift_schedule = "constant";  // constant | power | off
  double drift_c0 = 1.0;
  double drift_alpha = 2.0;
  double drift_K = 0.0;  // 0 -> unset (fitted where needed)

  // PDE grid and runs
  double grid_lambda_min = 1e-4;
  double grid_lambda_max = 10.0;
  int grid_cells_per_decade = 64;
  double pde_cfl_safety = 0.4;
  std::string pde_init = "powerlaw";  // powerlaw | pulse-band | pulse-gauss
  double pde_band_lo = 0.3;
  double pde_band_hi = 3.0;
  double pde_pulse_center = 1.0;
  double pde_pulse_width = 0.1;
  double pde_tau_lo = 1.0;
  double pde_tau_hi = 100.0;
  int pde_snapshots = 25;
  std::vector<double> pde_tail_taus{0.5, 1.0, 2.0};
  std::vector<double> pde_grsd_taus{2000.0, 3000.0, 5000.0};
  double pde_drop = 0.36787944117144233;  // e^{-1}
  double pde_grsd_band_lo = 0.55;
  double pde_grsd_band_hi = 0.85;
  double pde_loss_fit_lo = 10.0;
  double pde_loss_fit_hi = 100.0;

  // double descent
  std::vector<double> dd_feature_ratios{0.5, 1.0, 2.0};
  int dd_seed_count = 5;
  double dd_t_end = 2e4;
  double dd_dt_safety = 0.5;        // dt = safety / lambda_max
  double dd_snapshot_growth = 1.03; // geometric snapshot schedule
  double dd_bump_margin = 0.02;     // two-sided prominence for the rise/fall verdict
  double dd_tail_quantile = 0.25;   // top quantile of eigenvalues forming the tail proxy

  // regimes
  std::vector<double> regimes_b{0.5, 1.0, 3.0};
  bool regimes_include_frozen = true;

  std::vector<std::uint64_t> seeds{1};

  void validate() const;
  ModelSpec model_spec() const;
  DriftSpec drift_spec() const;
  Integrator integrator() const;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

}  // namespace shellflow

#include "shellflow/config.hpp"

#include <fstream>
#include <set>

namespace shellflow {

namespace {

const std::set<std::string> kExperiments{"ode-verify", "shell-audit", "pde-scaling",
                                         "double-descent", "regimes"};

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& field) {
  if (doc.contains(key)) {
    try {
      field = doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!kExperiments.count(experiment))
    throw ConfigError("unknown experiment '" + experiment + "'");
  if (format != "csv" && format != "json" && format != "plotdata")
    throw ConfigError("format must be csv, json, or plotdata");
  model_spec().validate();
  drift_spec().validate();
  if (data_n_train < 1) throw ConfigError("data_n_train must be >= 1");
  if (experiment == "double-descent" && data_n_test < 1)
    throw ConfigError("double-descent needs data_n_test >= 1");
  if (!(dynamics_dt > 0.0)) throw ConfigError("dynamics_dt must be > 0");
  if (dynamics_steps < 1) throw ConfigError("dynamics_steps must be >= 1");
  if (dynamics_stride < 1) throw ConfigError("dynamics_stride must be >= 1");
  if (dynamics_integrator != "euler" && dynamics_integrator != "rk4")
    throw ConfigError("dynamics_integrator must be euler or rk4");
  if (!(shells_q > 1.0)) throw ConfigError("shells_q must be > 1");
  if (!(pde_drop > 0.0 && pde_drop < 1.0)) throw ConfigError("pde_drop must lie in (0, 1)");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (dd_seed_count < 1) throw ConfigError("dd_seed_count must be >= 1");
  LogGrid::make(grid_lambda_min, grid_lambda_max, grid_cells_per_decade);  // validates
}

ModelSpec ExperimentConfig::model_spec() const {
  ModelSpec spec;
  if (model_kind == "mlp") {
    spec.kind = ModelKind::Mlp;
  } else if (model_kind == "random-features") {
    spec.kind = ModelKind::RandomFeatures;
  } else {
    throw ConfigError("model_kind must be mlp or random-features");
  }
  spec.layer_widths = model_layers;
  if (model_activation == "tanh") {
    spec.activation = Activation::Tanh;
  } else if (model_activation == "relu") {
    spec.activation = Activation::Relu;
  } else if (model_activation == "identity") {
    spec.activation = Activation::Identity;
  } else {
    throw ConfigError("model_activation must be tanh, relu, or identity");
  }
  spec.feature_count = model_feature_count;
  spec.init_scale = model_init_scale;
  spec.seed = model_seed;
  return spec;
}

DriftSpec ExperimentConfig::drift_spec() const {
  DriftSpec drift;
  drift.b = drift_b;
  if (drift_schedule == "constant") {
    drift.schedule = ScheduleKind::Constant;
  } else if (drift_schedule == "power") {
    drift.schedule = ScheduleKind::Power;
  } else if (drift_schedule == "off") {
    drift.schedule = ScheduleKind::Off;
  } else {
    throw ConfigError("drift_schedule must be constant, power, or off");
  }
  drift.c0 = drift_c0;
  drift.alpha = drift_alpha;
  if (drift_K > 0.0) drift.cutoff_constant = drift_K;
  return drift;
}

Integrator ExperimentConfig::integrator() const {
  return dynamics_integrator == "euler" ? Integrator::Euler : Integrator::Rk4;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  ExperimentConfig cfg;
  const nlohmann::json defaults = cfg.to_json();
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  read_key(doc, "experiment", cfg.experiment);
  read_key(doc, "output_dir", cfg.output_dir);
  read_key(doc, "format", cfg.format);
  read_key(doc, "model_kind", cfg.model_kind);
  read_key(doc, "model_layers", cfg.model_layers);
  read_key(doc, "model_activation", cfg.model_activation);
  read_key(doc, "model_feature_count", cfg.model_feature_count);
  read_key(doc, "model_init_scale", cfg.model_init_scale);
  read_key(doc, "model_seed", cfg.model_seed);
  read_key(doc, "data_distribution", cfg.data_distribution);
  read_key(doc, "data_input_dim", cfg.data_input_dim);
  read_key(doc, "data_n_train", cfg.data_n_train);
  read_key(doc, "data_n_test", cfg.data_n_test);
  read_key(doc, "data_seed", cfg.data_seed);
  read_key(doc, "data_teacher", cfg.data_teacher);
  read_key(doc, "data_teacher_seed", cfg.data_teacher_seed);
  read_key(doc, "data_teacher_scale", cfg.data_teacher_scale);
  read_key(doc, "data_sine_freq", cfg.data_sine_freq);
  read_key(doc, "data_noise_sd", cfg.data_noise_sd);
  read_key(doc, "dynamics_dt", cfg.dynamics_dt);
  read_key(doc, "dynamics_steps", cfg.dynamics_steps);
  read_key(doc, "dynamics_stride", cfg.dynamics_stride);
  read_key(doc, "dynamics_integrator", cfg.dynamics_integrator);
  read_key(doc, "dynamics_rank_tol", cfg.dynamics_rank_tol);
  read_key(doc, "dynamics_gap_floor_rel", cfg.dynamics_gap_floor_rel);
  read_key(doc, "dynamics_overlap_floor", cfg.dynamics_overlap_floor);
  read_key(doc, "shells_q", cfg.shells_q);
  read_key(doc, "shells_lambda0", cfg.shells_lambda0);
  read_key(doc, "shells_ledger_stride", cfg.shells_ledger_stride);
  read_key(doc, "shells_emit_max", cfg.shells_emit_max);
  read_key(doc, "drift_b", cfg.drift_b);
  read_key(doc, "drift_schedule", cfg.drift_schedule);
  read_key(doc, "drift_c0", cfg.drift_c0);
  read_key(doc, "drift_alpha", cfg.drift_alpha);
  read_key(doc, "drift_K", cfg.drift_K);
  read_key(doc, "grid_lambda_min", cfg.grid_lambda_min);
  read_key(doc, "grid_lambda_max", cfg.grid_lambda_max);
  read_key(doc, "grid_cells_per_decade", cfg.grid_cells_per_decade);
  read_key(doc, "pde_cfl_safety", cfg.pde_cfl_safety);
  read_key(doc, "pde_init", cfg.pde_init);
  read_key(doc, "pde_band_lo", cfg.pde_band_lo);
  read_key(doc, "pde_band_hi", cfg.pde_band_hi);
  read_key(doc, "pde_pulse_center", cfg.pde_pulse_center);
  read_key(doc, "pde_pulse_width", cfg.pde_pulse_width);
  read_key(doc, "pde_tau_lo", cfg.pde_tau_lo);
  read_key(doc, "pde_tau_hi", cfg.pde_tau_hi);
  read_key(doc, "pde_snapshots", cfg.pde_snapshots);
  read_key(doc, "pde_tail_taus", cfg.pde_tail_taus);
  read_key(doc, "pde_grsd_taus", cfg.pde_grsd_taus);
  read_key(doc, "pde_drop", cfg.pde_drop);
  read_key(doc, "pde_grsd_band_lo", cfg.pde_grsd_band_lo);
  read_key(doc, "pde_grsd_band_hi", cfg.pde_grsd_band_hi);
  read_key(doc, "pde_loss_fit_lo", cfg.pde_loss_fit_lo);
  read_key(doc, "pde_loss_fit_hi", cfg.pde_loss_fit_hi);
  read_key(doc, "dd_feature_ratios", cfg.dd_feature_ratios);
  read_key(doc, "dd_seed_count", cfg.dd_seed_count);
  read_key(doc, "dd_t_end", cfg.dd_t_end);
  read_key(doc, "dd_dt_safety", cfg.dd_dt_safety);
  read_key(doc, "dd_snapshot_growth", cfg.dd_snapshot_growth);
  read_key(doc, "dd_bump_margin", cfg.dd_bump_margin);
  read_key(doc, "dd_tail_quantile", cfg.dd_tail_quantile);
  read_key(doc, "regimes_b", cfg.regimes_b);
  read_key(doc, "regimes_include_frozen", cfg.regimes_include_frozen);
  read_key(doc, "seeds", cfg.seeds);

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_json(doc);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["output_dir"] = output_dir;
  j["format"] = format;
  j["model_kind"] = model_kind;
  j["model_layers"] = model_layers;
  j["model_activation"] = model_activation;
  j["model_feature_count"] = model_feature_count;
  j["model_init_scale"] = model_init_scale;
  j["model_seed"] = model_seed;
  j["data_distribution"] = data_distribution;
  j["data_input_dim"] = data_input_dim;
  j["data_n_train"] = data_n_train;
  j["data_n_test"] = data_n_test;
  j["data_seed"] = data_seed;
  j["data_teacher"] = data_teacher;
  j["data_teacher_seed"] = data_teacher_seed;
  j["data_teacher_scale"] = data_teacher_scale;
  j["data_sine_freq"] = data_sine_freq;
  j["data_noise_sd"] = data_noise_sd;
  j["dynamics_dt"] = dynamics_dt;
  j["dynamics_steps"] = dynamics_steps;
  j["dynamics_stride"] = dynamics_stride;
  j["dynamics_integrator"] = dynamics_integrator;
  j["dynamics_rank_tol"] = dynamics_rank_tol;
  j["dynamics_gap_floor_rel"] = dynamics_gap_floor_rel;
  j["dynamics_overlap_floor"] = dynamics_overlap_floor;
  j["shells_q"] = shells_q;
  j["shells_lambda0"] = shells_lambda0;
  j["shells_ledger_stride"] = shells_ledger_stride;
  j["shells_emit_max"] = shells_emit_max;
  j["drift_b"] = drift_b;
  j["drift_schedule"] = drift_schedule;
  j["drift_c0"] = drift_c0;
  j["drift_alpha"] = drift_alpha;
  j["drift_K"] = drift_K;
  j["grid_lambda_min"] = grid_lambda_min;
  j["grid_lambda_max"] = grid_lambda_max;
  j["grid_cells_per_decade"] = grid_cells_per_decade;
  j["pde_cfl_safety"] = pde_cfl_safety;
  j["pde_init"] = pde_init;
  j["pde_band_lo"] = pde_band_lo;
  j["pde_band_hi"] = pde_band_hi;
  j["pde_pulse_center"] = pde_pulse_center;
  j["pde_pulse_width"] = pde_pulse_width;
  j["pde_tau_lo"] = pde_tau_lo;
  j["pde_tau_hi"] = pde_tau_hi;
  j["pde_snapshots"] = pde_snapshots;
  j["pde_tail_taus"] = pde_tail_taus;
  j["pde_grsd_taus"] = pde_grsd_taus;
  j["pde_drop"] = pde_drop;
  j["pde_grsd_band_lo"] = pde_grsd_band_lo;
  j["pde_grsd_band_hi"] = pde_grsd_band_hi;
  j["pde_loss_fit_lo"] = pde_loss_fit_lo;
  j["pde_loss_fit_hi"] = pde_loss_fit_hi;
  j["dd_feature_ratios"] = dd_feature_ratios;
  j["dd_seed_count"] = dd_seed_count;
  j["dd_t_end"] = dd_t_end;
  j["dd_dt_safety"] = dd_dt_safety;
  j["dd_snapshot_growth"] = dd_snapshot_growth;
  j["dd_bump_margin"] = dd_bump_margin;
  j["dd_tail_quantile"] = dd_tail_quantile;
  j["regimes_b"] = regimes_b;
  j["regimes_include_frozen"] = regimes_include_frozen;
  j["seeds"] = seeds;
  return j;
}

}  // namespace shellflow

#pragma once

#include "shellflow/common.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace shellflow {

enum class ScheduleKind { Constant, Power, Off };

/// Drift interface v(lambda, t) = -c(t) * lambda^b. `Off` is the zero-drift
/// (frozen-operator) limit: no transport, only per-mode dissipation.
struct DriftSpec {
  double b = 3.0;
  ScheduleKind schedule = ScheduleKind::Constant;
  double c0 = 1.0;       // constant amplitude, or prefactor of c0 * t^(alpha-1)
  double alpha = 2.0;    // power-schedule exponent
  std::optional<double> cutoff_constant;  // fitted K of the tail template

  void validate() const;
  double amplitude(double t) const;       // c(t)
  double time_of_tau(double tau) const;   // inverse of effective_time
};

/// tau(t) = integral of c(s) ds from 0 to t, in closed form.
double effective_time(const DriftSpec& drift, double t);

/// Characteristic position after effective time tau; nullopt once a
/// subcritical (b < 1) trajectory has reached the spectral floor.
std::optional<double> characteristic(double lambda0, const DriftSpec& drift, double tau);

/// tau at which a subcritical characteristic reaches lambda = 0.
double subcritical_hit_time(double lambda0, double b);

/// Accumulated dissipation exponent along a characteristic,
/// Phi = integral of 2 lambda(s) ds, by refined composite quadrature.
double dissipation_action(double lambda0, const DriftSpec& drift, double t, int steps);

/// Log-uniform cell grid on [lambda_min, lambda_max].
class LogGrid {
 public:
  static LogGrid make(double lambda_min, double lambda_max, int cells_per_decade);

  int cells() const { return static_cast<int>(centers_.size()); }
  double edge(int i) const { return edges_(i); }
  double center(int i) const { return centers_(i); }
  double width(int i) const { return widths_(i); }
  const VectorXd& centers() const { return centers_; }
  const VectorXd& widths() const { return widths_; }
  double lambda_min() const { return edges_(0); }
  double lambda_max() const { return edges_(edges_.size() - 1); }
  int cells_per_decade() const { return cells_per_decade_; }

 private:
  VectorXd edges_, centers_, widths_;
  int cells_per_decade_ = 0;
};

/// Energy density sampled on a log grid at one effective time. `time` carries
/// the physical clock (it keeps running in the zero-drift limit where tau is
/// frozen). Boundary and flush losses are accumulated so mass audits close.
struct DensityField {
  LogGrid grid;
  VectorXd values;
  double tau = 0.0;
  double time = 0.0;
  double mass_out_low = 0.0;   // cumulative outflow through lambda_min
  double mass_in_high = 0.0;   // cumulative inflow at lambda_max (always 0)
  double mass_flushed = 0.0;   // cumulative mass removed by the dust flush

  double total_mass() const;
  void validate() const;
};

enum class Dissipation { On, Off };

/// First-order upwind finite-volume transport step in lambda marched in tau,
/// with the -2 lambda eps sink applied as an exact per-cell integrating
/// factor over the corresponding physical time increment. Zero inflow at
/// lambda_max, absorbing outflow at lambda_min. The CFL condition
/// |v| dtau <= cell width is checked per step on occupied cells.
std::vector<DensityField> evolve_density(const DensityField& init, const DriftSpec& drift,
                                         double dtau, int steps, Dissipation dissipation);

/// Convenience driver: march `field` to tau_stop (physical time for the Off
/// schedule) with a per-step adaptive dtau at the given CFL safety factor.
DensityField advance_density(DensityField field, const DriftSpec& drift, double tau_stop,
                             Dissipation dissipation, double cfl_safety = 0.4);

/// Tail template in energy form: A * lambda^-b * exp(-K lambda^(b-1) tau).
double grsd_template(double lambda, double amplitude, const DriftSpec& drift, double tau);

/// RMS-amplitude form sqrt(2 eps) of the same template.
double grsd_template_rms(double lambda, double amplitude, const DriftSpec& drift, double tau);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r2 = 1.0;
  int n = 0;
};

/// Least-squares line through (x, y); slope_stderr from the usual OLS formula.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

struct TailFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
  int cells = 0;
};

/// Log-log slope of eps over a lambda window. Requires at least 8 cells above
/// the density floor (relative to the field maximum).
TailFit fit_tail_exponent(const DensityField& field, double window_lo, double window_hi,
                          double density_floor_rel = 1e-12);

struct FrontierEstimate {
  double lambda_star = 0.0;
  double amplitude = 0.0;      // fitted A of the reference power law
  double window_lo = 0.0, window_hi = 0.0;  // below-frontier amplitude window
};

/// Resolution frontier: the largest lambda at which the measured cutoff
/// factor eps / (A_fit lambda^-b) still reaches `drop`. A_fit comes from the
/// low-lambda (below-frontier) window; the crossing is sharpened by local
/// quadratic interpolation in log-log coordinates. Throws DivergenceError
/// when the whole range is suppressed below `drop`.
FrontierEstimate frontier(const DensityField& field, double b, double drop = 0.36787944117144233);

/// Cell-midpoint quadrature of the density: L = sum eps_i dlambda_i.
double loss_from_density(const DensityField& field);

struct ScalingFit {
  double exponent = 0.0;
  double stderr_ = 0.0;
  double r2 = 1.0;
  double window_lo = 0.0, window_hi = 0.0;
  int n = 0;
};

/// Log-log slope of a positive series over a tau window.
ScalingFit fit_scaling_exponent(const std::vector<double>& tau, const std::vector<double>& value,
                                double window_lo, double window_hi);

struct GrsdFit {
  double amplitude = 0.0;  // A
  double cutoff = 0.0;     // K
  double goodness = 0.0;   // R^2 of the transformed-coordinate regression
  double window_lo = 0.0, window_hi = 0.0;
  int cells = 0;
};

/// Linear regression of log eps + b log lambda against lambda^(b-1) tau:
/// intercept log A, slope -K. The working window keeps cells whose measured
/// cutoff factor lies in a mid band (default [0.55, 0.85]); when that band is
/// too thin it falls back to the central 60% of the positive support.
GrsdFit fit_grsd(const DensityField& field, double b, double band_lo = 0.55,
                 double band_hi = 0.85);

/// Adaptive Simpson quadrature, used for template-integral reporting.
double adaptive_quadrature(const std::function<double(double)>& f, double a, double b,
                           double rel_tol = 1e-10);

}  // namespace shellflow

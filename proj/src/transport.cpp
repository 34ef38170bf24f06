#include "shellflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shellflow {

namespace {

constexpr double kDustFloorRel = 1e-30;  // cells below this fraction of the peak are flushed

}  // namespace

void DriftSpec::validate() const {
  if (schedule == ScheduleKind::Off) return;
  if (!(b > 0.0)) throw ConfigError("DriftSpec: b must be > 0");
  if (!(c0 > 0.0)) throw ConfigError("DriftSpec: c0 must be > 0");
  if (schedule == ScheduleKind::Power && !(alpha > 0.0))
    throw ConfigError("DriftSpec: power schedule needs alpha > 0");
}

double DriftSpec::amplitude(double t) const {
  switch (schedule) {
    case ScheduleKind::Constant: return c0;
    case ScheduleKind::Power: return c0 * std::pow(t, alpha - 1.0);
    case ScheduleKind::Off: return 0.0;
  }
  return 0.0;
}

double DriftSpec::time_of_tau(double tau) const {
  switch (schedule) {
    case ScheduleKind::Constant: return tau / c0;
    case ScheduleKind::Power: return std::pow(alpha * tau / c0, 1.0 / alpha);
    case ScheduleKind::Off:
      throw ConfigError("DriftSpec: tau is frozen for the zero-drift schedule");
  }
  return 0.0;
}

double effective_time(const DriftSpec& drift, double t) {
  if (t < 0.0) throw ConfigError("effective_time: t must be >= 0");
  drift.validate();
  switch (drift.schedule) {
    case ScheduleKind::Constant: return drift.c0 * t;
    case ScheduleKind::Power: return drift.c0 * std::pow(t, drift.alpha) / drift.alpha;
    case ScheduleKind::Off: return 0.0;
  }
  return 0.0;
}

std::optional<double> characteristic(double lambda0, const DriftSpec& drift, double tau) {
  if (!(lambda0 > 0.0)) throw ConfigError("characteristic: lambda0 must be > 0");
  if (drift.schedule == ScheduleKind::Off) return lambda0;
  const double b = drift.b;
  if (b == 1.0) return lambda0 * std::exp(-tau);
  const double base = std::pow(lambda0, 1.0 - b) + (b - 1.0) * tau;
  if (b < 1.0 && base <= 0.0) return std::nullopt;  // reached the spectral floor
  return std::pow(base, 1.0 / (1.0 - b));
}

double subcritical_hit_time(double lambda0, double b) {
  if (!(lambda0 > 0.0)) throw ConfigError("subcritical_hit_time: lambda0 must be > 0");
  if (!(b > 0.0 && b < 1.0)) throw ConfigError("subcritical_hit_time: b must lie in (0, 1)");
  return std::pow(lambda0, 1.0 - b) / (1.0 - b);
}

double dissipation_action(double lambda0, const DriftSpec& drift, double t, int steps) {
  if (steps < 100) throw ConfigError("dissipation_action: steps must be >= 100");
  if (t < 0.0) throw ConfigError("dissipation_action: t must be >= 0");
  if (t == 0.0) return 0.0;

  const auto integrand = [&](double s) {
    const auto lam = characteristic(lambda0, drift, effective_time(drift, s));
    return lam ? 2.0 * *lam : 0.0;  // pinned at the floor after a subcritical hit
  };
  const auto simpson = [&](long n) {
    const double h = t / static_cast<double>(n);
    double acc = integrand(0.0) + integrand(t);
    for (long i = 1; i < n; ++i) acc += integrand(h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
  };

  long n = steps + (steps % 2);
  double coarse = simpson(n);
  for (int refine = 0; refine < 18; ++refine) {
    const double fine = simpson(2 * n);
    if (relative_diff(coarse, fine) < 1e-8) return (16.0 * fine - coarse) / 15.0;
    coarse = fine;
    n *= 2;
  }
  return coarse;
}

LogGrid LogGrid::make(double lambda_min, double lambda_max, int cells_per_decade) {
  if (!(lambda_min > 0.0) || !(lambda_max > lambda_min))
    throw ConfigError("LogGrid: need 0 < lambda_min < lambda_max");
  if (cells_per_decade < 1) throw ConfigError("LogGrid: cells_per_decade must be >= 1");
  LogGrid grid;
  grid.cells_per_decade_ = cells_per_decade;
  const double decades = std::log10(lambda_max / lambda_min);
  const int nc = std::max(1, static_cast<int>(std::lround(decades * cells_per_decade)));
  grid.edges_.resize(nc + 1);
  grid.centers_.resize(nc);
  grid.widths_.resize(nc);
  const double step = std::log(lambda_max / lambda_min) / nc;
  for (int i = 0; i <= nc; ++i) grid.edges_(i) = lambda_min * std::exp(step * i);
  grid.edges_(nc) = lambda_max;
  for (int i = 0; i < nc; ++i) {
    grid.centers_(i) = std::sqrt(grid.edges_(i) * grid.edges_(i + 1));
    grid.widths_(i) = grid.edges_(i + 1) - grid.edges_(i);
  }
  return grid;
}

double DensityField::total_mass() const {
  return (values.array() * grid.widths().array()).sum();
}

void DensityField::validate() const {
  if (values.size() != grid.cells()) throw ConfigError("DensityField: value/grid size mismatch");
  if (!values.allFinite()) throw DivergenceError("DensityField: non-finite density");
  if ((values.array() < 0.0).any()) throw DivergenceError("DensityField: negative density");
}

namespace {

// One upwind transport + integrating-factor step, marched by dtau (by dt for
// the Off schedule). Velocities are passed as |v| at the cell edges in tau
// units, i.e. lambda_edge^b.
void step_density(DensityField& field, const DriftSpec& drift, const VectorXd& edge_speed,
                  double dtau, Dissipation dissipation, bool check_cfl) {
  const int nc = field.grid.cells();
  VectorXd& eps = field.values;

  if (check_cfl) {
    for (int i = 0; i < nc; ++i) {
      if (eps(i) <= 0.0) continue;
      if (edge_speed(i) * dtau > field.grid.width(i))
        throw DivergenceError("evolve_density: CFL violation at cell " + std::to_string(i));
    }
  }

  // Downward flow: the donor cell of every edge is the cell above it.
  double outflow = 0.0;
  VectorXd next(nc);
  for (int i = 0; i < nc; ++i) {
    const double flux_out = edge_speed(i) * eps(i);                    // through the lower edge
    const double flux_in = (i + 1 < nc) ? edge_speed(i + 1) * eps(i + 1) : 0.0;
    next(i) = eps(i) + dtau * (flux_in - flux_out) / field.grid.width(i);
    if (i == 0) outflow = flux_out * dtau;
  }
  field.mass_out_low += outflow;
  eps = std::move(next);

  double dt_phys = dtau;
  if (drift.schedule != ScheduleKind::Off) {
    const double t_next = drift.time_of_tau(field.tau + dtau);
    dt_phys = t_next - field.time;
    field.tau += dtau;
    field.time = t_next;
  } else {
    field.time += dtau;
  }

  if (dissipation == Dissipation::On) {
    for (int i = 0; i < nc; ++i) eps(i) *= std::exp(-2.0 * field.grid.center(i) * dt_phys);
  }

  double peak = 0.0;
  for (int i = 0; i < nc; ++i) {
    if (eps(i) < 0.0) throw DivergenceError("evolve_density: negative density (scheme bug)");
    peak = std::max(peak, eps(i));
  }
  const double dust = kDustFloorRel * peak;
  for (int i = 0; i < nc; ++i) {
    if (eps(i) > 0.0 && eps(i) < dust) {
      field.mass_flushed += eps(i) * field.grid.width(i);
      eps(i) = 0.0;
    }
  }
}

VectorXd edge_speeds(const LogGrid& grid, const DriftSpec& drift) {
  const int nc = grid.cells();
  VectorXd speed(nc);
  if (drift.schedule == ScheduleKind::Off) {
    speed.setZero();
    return speed;
  }
  for (int i = 0; i < nc; ++i) speed(i) = std::pow(grid.edge(i), drift.b);
  return speed;
}

}  // namespace

std::vector<DensityField> evolve_density(const DensityField& init, const DriftSpec& drift,
                                         double dtau, int steps, Dissipation dissipation) {
  if (!(dtau > 0.0)) throw ConfigError("evolve_density: dtau must be positive");
  if (steps < 1) throw ConfigError("evolve_density: steps must be >= 1");
  drift.validate();
  init.validate();

  const VectorXd speed = edge_speeds(init.grid, drift);
  std::vector<DensityField> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(init);
  DensityField field = init;
  for (int k = 0; k < steps; ++k) {
    step_density(field, drift, speed, dtau, dissipation, /*check_cfl=*/true);
    out.push_back(field);
  }
  return out;
}

DensityField advance_density(DensityField field, const DriftSpec& drift, double tau_stop,
                             Dissipation dissipation, double cfl_safety) {
  if (!(cfl_safety > 0.0 && cfl_safety <= 0.9))
    throw ConfigError("advance_density: cfl_safety must lie in (0, 0.9]");
  drift.validate();
  field.validate();
  const VectorXd speed = edge_speeds(field.grid, drift);
  const bool off = drift.schedule == ScheduleKind::Off;
  const auto clock = [&]() { return off ? field.time : field.tau; };

  long guard = 0;
  while (clock() < tau_stop - 1e-15 * std::max(1.0, tau_stop)) {
    double dtau_max = std::numeric_limits<double>::infinity();
    if (!off) {
      for (int i = 0; i < field.grid.cells(); ++i) {
        if (field.values(i) <= 0.0 || speed(i) == 0.0) continue;
        dtau_max = std::min(dtau_max, field.grid.width(i) / speed(i));
      }
    }
    double dtau = std::min(tau_stop - clock(), cfl_safety * dtau_max);
    if (!std::isfinite(dtau) || dtau <= 0.0) dtau = tau_stop - clock();
    step_density(field, drift, speed, dtau, dissipation, /*check_cfl=*/true);
    if (++guard > 100000000L) throw DivergenceError("advance_density: step limit exceeded");
  }
  return field;
}

double grsd_template(double lambda, double amplitude, const DriftSpec& drift, double tau) {
  if (!drift.cutoff_constant)
    throw ConfigError("grsd_template: drift has no fitted cutoff constant K");
  if (!(lambda > 0.0) || !(amplitude > 0.0))
    throw ConfigError("grsd_template: lambda and amplitude must be positive");
  const double b = drift.b;
  return amplitude * std::pow(lambda, -b) *
         std::exp(-*drift.cutoff_constant * std::pow(lambda, b - 1.0) * tau);
}

double grsd_template_rms(double lambda, double amplitude, const DriftSpec& drift, double tau) {
  return std::sqrt(2.0 * grsd_template(lambda, amplitude, drift, tau));
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("linear_fit: need >= 2 points");
  const int n = static_cast<int>(x.size());
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("linear_fit: degenerate abscissa");
  LinearFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.slope_stderr = n > 2 ? std::sqrt(ss_res / (n - 2) / sxx) : 0.0;
  return fit;
}

TailFit fit_tail_exponent(const DensityField& field, double window_lo, double window_hi,
                          double density_floor_rel) {
  field.validate();
  if (!(window_lo > 0.0 && window_hi > window_lo))
    throw ConfigError("fit_tail_exponent: bad window");
  const double floor = density_floor_rel * field.values.maxCoeff();
  std::vector<double> lx, ly;
  for (int i = 0; i < field.grid.cells(); ++i) {
    const double lam = field.grid.center(i);
    if (lam < window_lo || lam > window_hi) continue;
    if (!(field.values(i) > floor)) continue;
    lx.push_back(std::log(lam));
    ly.push_back(std::log(field.values(i)));
  }
  if (lx.size() < 8) throw ConfigError("fit_tail_exponent: insufficient support in window");
  const LinearFit fit = linear_fit(lx, ly);
  TailFit tail;
  tail.slope = fit.slope;
  tail.stderr_ = fit.slope_stderr;
  tail.window_lo = window_lo;
  tail.window_hi = window_hi;
  tail.cells = fit.n;
  return tail;
}

namespace {

// Fitted amplitude of the reference power law A * lambda^-b over the
// below-frontier window: the lowest fifth of the positive support, two
// boundary cells excluded. The median keeps cutoff contamination out.
struct AmplitudeFit {
  double log_a = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
};

AmplitudeFit fit_reference_amplitude(const DensityField& field, double b) {
  const int nc = field.grid.cells();
  int lo = -1, hi = -1;
  const double floor = kDustFloorRel * field.values.maxCoeff();
  for (int i = 0; i < nc; ++i) {
    if (field.values(i) > floor) {
      if (lo < 0) lo = i;
      hi = i;
    }
  }
  if (lo < 0) throw DivergenceError("frontier: field is empty");
  const int support = hi - lo + 1;
  int w_lo = lo + std::min(2, support / 4);
  int w_hi = w_lo + std::max(support / 5, 8) - 1;
  w_hi = std::min(w_hi, hi);
  std::vector<double> vals;
  for (int i = w_lo; i <= w_hi; ++i) {
    if (field.values(i) <= 0.0) continue;
    vals.push_back(std::log(field.values(i)) + b * std::log(field.grid.center(i)));
  }
  if (vals.size() < 4) throw DivergenceError("frontier: below-frontier window is empty");
  std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
  AmplitudeFit fit;
  fit.log_a = vals[vals.size() / 2];
  fit.window_lo = field.grid.center(w_lo);
  fit.window_hi = field.grid.center(std::min(w_hi, nc - 1));
  return fit;
}

// Root of the parabola through (x0,y0),(x1,y1),(x2,y2) inside [x1, x2];
// falls back to the secant through (x1, x2).
double interpolate_crossing(double x0, double y0, double x1, double y1, double x2, double y2) {
  const double h0 = x1 - x0, h1 = x2 - x1;
  const double d0 = (y1 - y0) / h0, d1 = (y2 - y1) / h1;
  const double a = (d1 - d0) / (h0 + h1);
  const double bq = d1 + a * h1;  // derivative at x2
  // parabola about x2: y(x) = y2 + bq (x - x2) + a (x - x2)^2
  const double disc = bq * bq - 4.0 * a * y2;
  if (a != 0.0 && disc >= 0.0) {
    const double r = std::sqrt(disc);
    for (const double root : {(-bq + r) / (2.0 * a), (-bq - r) / (2.0 * a)}) {
      const double x = x2 + root;
      if (x >= std::min(x1, x2) - 1e-12 && x <= std::max(x1, x2) + 1e-12) return x;
    }
  }
  // secant fallback
  return x1 + (0.0 - y1) * (x2 - x1) / (y2 - y1);
}

}  // namespace

FrontierEstimate frontier(const DensityField& field, double b, double drop) {
  field.validate();
  if (!(drop > 0.0 && drop < 1.0)) throw ConfigError("frontier: drop must lie in (0, 1)");
  const AmplitudeFit amp = fit_reference_amplitude(field, b);
  const double log_drop = std::log(drop);

  const int nc = field.grid.cells();
  const auto log_factor = [&](int i) -> double {
    if (!(field.values(i) > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(field.values(i)) + b * std::log(field.grid.center(i)) - amp.log_a;
  };

  int hit = -1;
  for (int i = nc - 1; i >= 0; --i) {
    if (log_factor(i) >= log_drop) {
      hit = i;
      break;
    }
  }
  if (hit < 0) throw DivergenceError("frontier: no crossing in range (fully suppressed)");

  FrontierEstimate est;
  est.amplitude = std::exp(amp.log_a);
  est.window_lo = amp.window_lo;
  est.window_hi = amp.window_hi;
  if (hit == nc - 1) {
    est.lambda_star = field.grid.lambda_max();  // no suppression inside the range
    return est;
  }

  const double y1 = log_factor(hit) - log_drop;
  const double y2 = log_factor(hit + 1) - log_drop;
  const double x1 = std::log(field.grid.center(hit));
  const double x2 = std::log(field.grid.center(hit + 1));
  if (!std::isfinite(y2)) {
    est.lambda_star = field.grid.edge(hit + 1);  // vacuum plunge: report the cell edge
    return est;
  }
  double x;
  if (hit >= 1 && std::isfinite(log_factor(hit - 1))) {
    x = interpolate_crossing(std::log(field.grid.center(hit - 1)), log_factor(hit - 1) - log_drop,
                             x1, y1, x2, y2);
  } else {
    x = x1 - y1 * (x2 - x1) / (y2 - y1);
  }
  est.lambda_star = std::exp(x);
  return est;
}

double loss_from_density(const DensityField& field) {
  field.validate();
  return field.total_mass();
}

ScalingFit fit_scaling_exponent(const std::vector<double>& tau, const std::vector<double>& value,
                                double window_lo, double window_hi) {
  if (tau.size() != value.size()) throw ConfigError("fit_scaling_exponent: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (tau[i] < window_lo || tau[i] > window_hi) continue;
    if (!(value[i] > 0.0))
      throw ConfigError("fit_scaling_exponent: nonpositive value inside window");
    lx.push_back(std::log(tau[i]));
    ly.push_back(std::log(value[i]));
  }
  if (lx.size() < 8) throw ConfigError("fit_scaling_exponent: need >= 8 points in window");
  const LinearFit fit = linear_fit(lx, ly);
  ScalingFit scaling;
  scaling.exponent = fit.slope;
  scaling.stderr_ = fit.slope_stderr;
  scaling.r2 = fit.r2;
  scaling.window_lo = window_lo;
  scaling.window_hi = window_hi;
  scaling.n = fit.n;
  return scaling;
}

GrsdFit fit_grsd(const DensityField& field, double b, double band_lo, double band_hi) {
  field.validate();
  if (!(band_lo > 0.0 && band_hi > band_lo && band_hi < 1.0))
    throw ConfigError("fit_grsd: bad factor band");
  const AmplitudeFit amp = fit_reference_amplitude(field, b);

  const int nc = field.grid.cells();
  std::vector<int> window;
  for (int i = 0; i < nc; ++i) {
    if (!(field.values(i) > 0.0)) continue;
    const double f = std::log(field.values(i)) + b * std::log(field.grid.center(i)) - amp.log_a;
    if (f >= std::log(band_lo) && f <= std::log(band_hi)) window.push_back(i);
  }
  if (window.size() < 8) {
    // central 60% of the positive support, 2 boundary cells excluded
    window.clear();
    int lo = -1, hi = -1;
    const double floor = kDustFloorRel * field.values.maxCoeff();
    for (int i = 0; i < nc; ++i)
      if (field.values(i) > floor) {
        if (lo < 0) lo = i;
        hi = i;
      }
    if (lo < 0) throw ConfigError("fit_grsd: degenerate window");
    lo += 2;
    hi -= 2;
    const int span = hi - lo + 1;
    if (span < 8) throw ConfigError("fit_grsd: degenerate window");
    const int cut = static_cast<int>(0.2 * span);
    for (int i = lo + cut; i <= hi - cut; ++i)
      if (field.values(i) > 0.0) window.push_back(i);
    if (window.size() < 4) throw ConfigError("fit_grsd: degenerate window");
  }

  std::vector<double> x, y;
  for (int i : window) {
    x.push_back(std::pow(field.grid.center(i), b - 1.0) * field.tau);
    y.push_back(std::log(field.values(i)) + b * std::log(field.grid.center(i)));
  }
  const LinearFit fit = linear_fit(x, y);
  GrsdFit g;
  g.amplitude = std::exp(fit.intercept);
  g.cutoff = -fit.slope;
  g.goodness = fit.r2;
  g.window_lo = field.grid.center(window.front());
  g.window_hi = field.grid.center(window.back());
  g.cells = fit.n;
  return g;
}

namespace {

double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                            double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_quadrature(const std::function<double(double)>& f, double a, double b,
                           double rel_tol) {
  if (!(b > a)) throw ConfigError("adaptive_quadrature: need b > a");
  // Integrate in log coordinates when the domain is positive and wide; the
  // integrands here are near power laws.
  if (a > 0.0 && b / a > 100.0) {
    const auto g = [&](double u) {
      const double lam = std::exp(u);
      return f(lam) * lam;
    };
    return adaptive_quadrature(g, std::log(a), std::log(b), rel_tol);
  }
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double scale = std::max({std::abs(whole), 1e-300});
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol * scale, 48);
}

}  // namespace shellflow

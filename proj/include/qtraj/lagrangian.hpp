#pragma once

// Time evolution of a fluid-element ensemble: velocity Verlet for (x, v)
// with trapezoidal transport of log-density, action and log-Jacobian, plus
// the step-doubling controller and wavefunction reconstruction.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/mwls.hpp"

namespace qtraj::lagrangian {

struct DynamicsOptions {
  mwls::BasisSpec basis{};
  std::size_t n_neighbors = 10;
  /// false switches the quantum potential off (classical trajectories).
  bool quantum = true;
  /// Order of the smoothing fit applied to g and v after every adaptive
  /// step; 0 disables it. Quadratic g and linear v are left untouched.
  int smoothing_order = 3;
  std::size_t smoothing_neighbors = 10;
};

/// Fields evaluated on one configuration of the cloud.
struct FieldSample {
  double t = 0.0;
  std::vector<double> Q;           // quantum potential
  std::vector<double> force;       // -(dV/dx + dQ/dx)
  std::vector<double> divergence;  // dv/dx
  std::vector<double> lagrangian;  // 1/2 m v^2 - V - Q
  std::vector<double> energy;      // 1/2 m v^2 + V + Q
};

namespace detail {

inline std::vector<double> field_g(const Ensemble& e) {
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = e.elements[i].g;
  return out;
}

inline std::vector<double> field_v(const Ensemble& e) {
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = e.elements[i].v;
  return out;
}

struct QuantumTerms {
  std::vector<double> Q;
  std::vector<double> force;
};

inline QuantumTerms quantum_terms(const mwls::CloudFit& fit, std::span<const double> g, const PhysicalSystem& sys,
                                  bool quantum) {
  QuantumTerms out{std::vector<double>(g.size(), 0.0), std::vector<double>(g.size(), 0.0)};
  if (!quantum) return out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto jet = fit[i].fit_field(g);
    out.Q[i] = mwls::quantum_potential(jet, sys);
    out.force[i] = mwls::quantum_force(jet, sys);
  }
  return out;
}

inline std::vector<double> divergences(const mwls::CloudFit& fit, std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = mwls::velocity_divergence(fit[i].fit_field(v));
  return out;
}

inline mwls::CloudFit cloud_fit(const Ensemble& e, const DynamicsOptions& opts) {
  const auto x = e.positions();
  return mwls::CloudFit(std::span<const double>(x), opts.basis, opts.n_neighbors);
}

inline FieldSample sample_with(const Ensemble& e, const mwls::CloudFit& fit, const DynamicsOptions& opts) {
  const auto g = field_g(e);
  const auto v = field_v(e);
  auto q = quantum_terms(fit, g, e.system, opts.quantum);
  FieldSample s;
  s.t = e.t;
  s.divergence = divergences(fit, v);
  s.force.resize(e.size());
  s.lagrangian.resize(e.size());
  s.energy.resize(e.size());
  const double m = e.system.mass;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto& el = e.elements[i];
    const double V = potential_value(e.potential, el.x);
    const double kin = 0.5 * m * el.v * el.v;
    s.force[i] = -potential_gradient(e.potential, el.x) + q.force[i];
    s.lagrangian[i] = kin - V - q.Q[i];
    s.energy[i] = kin + V + q.Q[i];
  }
  s.Q = std::move(q.Q);
  return s;
}

}  // namespace detail

/// Q, forces, divergence, L and E at the current configuration.
inline FieldSample sample_fields(const Ensemble& e, const DynamicsOptions& opts) {
  return detail::sample_with(e, detail::cloud_fit(e, opts), opts);
}

/// a_i = (-dV/dx - dQ/dx) / m.
inline std::vector<double> compute_accelerations(const Ensemble& e, const DynamicsOptions& opts) {
  auto s = sample_fields(e, opts);
  for (auto& f : s.force) f /= e.system.mass;
  return s.force;
}

/// 1/2 m v^2 + V + Q along trajectory i.
inline double total_energy(const Ensemble& e, std::size_t i, const DynamicsOptions& opts) {
  return sample_fields(e, opts).energy.at(i);
}

/// sum_i rho_i dx_i(t).
inline double check_norm(const Ensemble& e) {
  double sum = 0.0;
  for (const auto& el : e.elements) sum += std::exp(el.g + el.logJ) * el.dx0;
  return sum;
}

struct StepOutcome {
  Ensemble state;
  FieldSample end;  // fields at the final configuration (empty on crossing)
  bool crossing_detected = false;
  double min_spacing = 0.0;
};

/// Number of trapezoidal corrector passes for the end-of-step divergence.
inline constexpr int kCorrectorPasses = 2;

namespace detail {

inline StepOutcome verlet_step_from(const Ensemble& e, const FieldSample& start, double dt,
                                    const DynamicsOptions& opts) {
  const double m = e.system.mass;
  const std::size_t n = e.size();
  StepOutcome out{e, {}, false, 0.0};
  auto& next = out.state;

  std::vector<double> v_half(n);
  for (std::size_t i = 0; i < n; ++i) {
    v_half[i] = e.elements[i].v + 0.5 * dt * start.force[i] / m;
    next.elements[i].x = e.elements[i].x + dt * v_half[i];
    next.elements[i].v = v_half[i];
  }
  next.t = e.t + dt;
  out.min_spacing = min_spacing(next);
  if (!(out.min_spacing > 0.0)) {
    out.crossing_detected = true;
    return out;
  }

  const auto fit = cloud_fit(next, opts);

  // Predictor uses the start divergence, then trapezoidal correction.
  std::vector<double> g_end(n), v_end(n), div_end(n);
  for (std::size_t i = 0; i < n; ++i) g_end[i] = e.elements[i].g - start.divergence[i] * dt;
  for (int pass = 0; pass < kCorrectorPasses; ++pass) {
    const auto q = quantum_terms(fit, g_end, e.system, opts.quantum);
    for (std::size_t i = 0; i < n; ++i) {
      const double f = -potential_gradient(e.potential, next.elements[i].x) + q.force[i];
      v_end[i] = v_half[i] + 0.5 * dt * f / m;
    }
    div_end = divergences(fit, v_end);
    for (std::size_t i = 0; i < n; ++i)
      g_end[i] = e.elements[i].g - 0.5 * (start.divergence[i] + div_end[i]) * dt;
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& el = next.elements[i];
    const double delta = 0.5 * (start.divergence[i] + div_end[i]) * dt;
    el.v = v_end[i];
    el.g = e.elements[i].g - delta;
    el.logJ = e.elements[i].logJ + delta;
  }
  out.end = sample_with(next, fit, opts);
  for (std::size_t i = 0; i < n; ++i)
    next.elements[i].S = e.elements[i].S + 0.5 * dt * (start.lagrangian[i] + out.end.lagrangian[i]);
  return out;
}

}  // namespace detail

/// One kick-drift-kick step with convective transport of g, logJ and S.
inline StepOutcome verlet_step(const Ensemble& e, double dt, const DynamicsOptions& opts) {
  if (!(dt > 0.0)) throw std::invalid_argument("verlet_step: dt must be positive");
  return detail::verlet_step_from(e, sample_fields(e, opts), dt, opts);
}

// ---------------------------------------------------------------------------
// Step-doubling control

struct StepController {
  double dt = 0.1;
  double tol = 1e-6;
  double shrink = 0.75;
  double grow = 2.0;
  double dt_min = 1e-4;
  double dt_max = 5.0;

  void validate() const {
    if (!(shrink > 0.0 && shrink < 1.0 && grow > 1.0)) throw ConfigError("controller needs 0 < shrink < 1 < grow");
    if (!(dt_min > 0.0 && dt_min <= dt && dt <= dt_max)) throw ConfigError("controller needs dt_min <= dt <= dt_max");
    if (!(tol > 0.0)) throw ConfigError("controller tolerance must be positive");
  }
};

struct StepDiagnostics {
  bool accepted = false;
  double max_rel_error = 0.0;
  double dt_used = 0.0;
  bool crossing_detected = false;
  double min_spacing = 0.0;
};

struct AdaptiveOutcome {
  Ensemble state;
  StepDiagnostics diagnostics;
  /// Fields after each half step, evaluated before smoothing.
  std::vector<FieldSample> samples;
};

namespace detail {

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline double scaled_difference(std::span<const double> coarse, std::span<const double> fine, double floor) {
  double diff = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) diff = std::max(diff, std::abs(coarse[i] - fine[i]));
  const double scale = std::max(max_abs(fine), floor);
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace detail

/// Largest relative disagreement in x, v, E and rho between a full step and
/// two half steps. Each quantity is scaled by its largest magnitude over the
/// ensemble; v is floored by sqrt(2 |E|max / m) and x by the ensemble extent
/// so that resting or centred ensembles do not divide by zero. Without a
/// quantum potential rho is a passive tracer and may be left out, which lets
/// classical runs reach a caustic instead of stalling on the diverging density.
inline double step_difference(const StepOutcome& coarse, const StepOutcome& fine, bool include_density = true) {
  const auto& a = coarse.state.elements;
  const auto& b = fine.state.elements;
  const std::size_t n = a.size();
  std::vector<double> xa(n), xb(n), va(n), vb(n), ra(n), rb(n);
  for (std::size_t i = 0; i < n; ++i) {
    xa[i] = a[i].x;
    xb[i] = b[i].x;
    va[i] = a[i].v;
    vb[i] = b[i].v;
    ra[i] = std::exp(a[i].g);
    rb[i] = std::exp(b[i].g);
  }
  const double extent = n ? xb.back() - xb.front() : 0.0;
  const double e_scale = detail::max_abs(fine.end.energy);
  const double v_floor = std::sqrt(2.0 * e_scale / fine.state.system.mass);
  double err = detail::scaled_difference(xa, xb, extent);
  err = std::max(err, detail::scaled_difference(va, vb, v_floor));
  err = std::max(err, detail::scaled_difference(coarse.end.energy, fine.end.energy, 0.0));
  if (include_density) err = std::max(err, detail::scaled_difference(ra, rb, 0.0));
  return err;
}

/// Applies the smoothing fit to g and v. The change in g is booked against
/// logJ so that g + logJ, and with it the norm, is unchanged. Classical runs
/// are left alone.
inline void smooth_state(Ensemble& e, const DynamicsOptions& opts) {
  if (!opts.quantum || opts.smoothing_order <= 0) return;
  const auto x = e.positions();
  const auto g = detail::field_g(e);
  const auto v = detail::field_v(e);
  const auto gs = mwls::smooth_field(x, g, opts.smoothing_order, opts.smoothing_neighbors);
  const auto vs = mwls::smooth_field(x, v, opts.smoothing_order, opts.smoothing_neighbors);
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto& el = e.elements[i];
    el.logJ += el.g - gs[i];
    el.g = gs[i];
    el.v = vs[i];
  }
}

/// One controlled step. The two-half-step result is always adopted; dt
/// shrinks by `shrink` when the comparison fails and grows by `grow` (capped
/// at dt_max) when it passes.
inline AdaptiveOutcome adaptive_step(const Ensemble& e, StepController& ctl, const DynamicsOptions& opts) {
  ctl.validate();
  const double dt = ctl.dt;
  const auto start = sample_fields(e, opts);

  auto half1 = detail::verlet_step_from(e, start, 0.5 * dt, opts);
  AdaptiveOutcome out;
  out.diagnostics.dt_used = dt;
  if (half1.crossing_detected) {
    out.state = std::move(half1.state);
    out.diagnostics.crossing_detected = true;
    out.diagnostics.min_spacing = half1.min_spacing;
    return out;
  }
  auto half2 = detail::verlet_step_from(half1.state, half1.end, 0.5 * dt, opts);
  if (half2.crossing_detected) {
    out.state = std::move(half2.state);
    out.samples.push_back(std::move(half1.end));
    out.diagnostics.crossing_detected = true;
    out.diagnostics.min_spacing = half2.min_spacing;
    return out;
  }
  const auto full = detail::verlet_step_from(e, start, dt, opts);

  const double err = full.crossing_detected ? std::numeric_limits<double>::infinity() : step_difference(full, half2, opts.quantum);
  out.diagnostics.max_rel_error = err;
  out.diagnostics.min_spacing = half2.min_spacing;
  out.diagnostics.accepted = err <= ctl.tol;
  out.state = std::move(half2.state);
  out.samples.push_back(std::move(half1.end));
  out.samples.push_back(std::move(half2.end));
  smooth_state(out.state, opts);

  if (out.diagnostics.accepted) {
    ctl.dt = std::min(dt * ctl.grow, ctl.dt_max);
  } else {
    const double next = dt * ctl.shrink;
    if (next < ctl.dt_min)
      throw StiffnessError("step size fell below dt_min at t = " + std::to_string(out.state.t));
    ctl.dt = next;
  }
  return out;
}

/// Step doubling at a fixed dt (no adaptation); returns the adopted state.
inline AdaptiveOutcome doubled_step(const Ensemble& e, double dt, const DynamicsOptions& opts) {
  StepController ctl;
  ctl.dt = dt;
  ctl.dt_min = dt;
  ctl.dt_max = dt;
  ctl.tol = std::numeric_limits<double>::infinity();
  return adaptive_step(e, ctl, opts);
}

// ---------------------------------------------------------------------------
// Wavefunction reconstruction

/// Time series of L and div v along one trajectory, starting at t = 0.
struct TrajectoryHistory {
  double g0 = 0.0;   // log rho at t = 0
  double S0 = 0.0;   // initial phase S(x, 0)
  double dx0 = 0.0;  // initial volume element
  std::vector<double> t;
  std::vector<double> lagrangian;
  std::vector<double> divergence;
};

struct ReconstructedAmplitude {
  std::complex<double> psi;
  double dx = 0.0;  // volume element at the last history time
};

/// psi_i(t) = sqrt(rho_i(0)) exp(i (int L + S0) / hbar) exp(-1/2 int div v),
/// dx_i(t) = dx_i(0) exp(int div v). Integrals by the trapezoidal rule.
inline ReconstructedAmplitude reconstruct_wavefunction(const TrajectoryHistory& h) {
  if (h.t.size() != h.lagrangian.size() || h.t.size() != h.divergence.size())
    throw std::invalid_argument("reconstruct_wavefunction: ragged history");
  double action = 0.0;
  double div = 0.0;
  for (std::size_t k = 1; k < h.t.size(); ++k) {
    const double dt = h.t[k] - h.t[k - 1];
    action += 0.5 * dt * (h.lagrangian[k] + h.lagrangian[k - 1]);
    div += 0.5 * dt * (h.divergence[k] + h.divergence[k - 1]);
  }
  const double modulus = std::exp(0.5 * h.g0 - 0.5 * div);
  const double phase = (action + h.S0) / kHbar;
  return {std::polar(modulus, phase), h.dx0 * std::exp(div)};
}

/// Accumulates per-element histories from the samples of successive steps.
class HistoryRecorder {
 public:
  explicit HistoryRecorder(const Ensemble& initial, const FieldSample& first) {
    histories_.resize(initial.size());
    for (std::size_t i = 0; i < initial.size(); ++i) {
      auto& h = histories_[i];
      h.g0 = initial.elements[i].g;
      h.S0 = initial.elements[i].S;
      h.dx0 = initial.elements[i].dx0;
    }
    append(first);
  }

  void append(const FieldSample& s) {
    for (std::size_t i = 0; i < histories_.size(); ++i) {
      histories_[i].t.push_back(s.t);
      histories_[i].lagrangian.push_back(s.lagrangian[i]);
      histories_[i].divergence.push_back(s.divergence[i]);
    }
  }

  const TrajectoryHistory& operator[](std::size_t i) const { return histories_[i]; }
  std::size_t size() const { return histories_.size(); }

 private:
  std::vector<TrajectoryHistory> histories_;
};

}  // namespace qtraj::lagrangian

#pragma once

// Experiment execution: resolves a configuration, runs one engine (MWLS,
// classical, DVR pilot waves, closed-form coherent state, or MWLS against
// DVR), and writes records, plot data and a manifest.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qtraj/analytic.hpp"
#include "qtraj/config.hpp"
#include "qtraj/core.hpp"
#include "qtraj/dvr.hpp"
#include "qtraj/io.hpp"
#include "qtraj/lagrangian.hpp"
#include "qtraj/mwls.hpp"
#include "qtraj/record.hpp"

namespace qtraj::runner {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitPhysicsTerminal = 3;

/// 1-based labels singled out in comparison reports.
inline constexpr std::array<std::size_t, 4> kHighlightLabels{9, 38, 39, 50};

inline constexpr const char* kLabelConvention = "1-based, elements ordered left to right at t = 0";

enum class Termination { EndTime, Crossing, Stiffness, DegenerateGeometry, LeftBox };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::EndTime: return "t_end_reached";
    case Termination::Crossing: return "crossing_detected";
    case Termination::Stiffness: return "stiffness";
    case Termination::DegenerateGeometry: return "degenerate_geometry";
    case Termination::LeftBox: return "left_box";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Mass resolution from the tunnelling doublet

struct MassCandidate {
  double mass = 0.0;
  double e_plus_cm = 0.0;
  double e_minus_cm = 0.0;
  double residual_cm = 0.0;  // max deviation from the reference pair
};

struct MassResolution {
  std::vector<MassCandidate> candidates;
  std::size_t chosen = 0;
  bool matched = false;  // residual within tolerance
  double tolerance_cm = 1.0;

  const MassCandidate& adopted() const { return candidates.at(chosen); }
};

struct DvrGridSpec {
  std::size_t n_points = 200;
  double x_left = -2.5;
  double x_right = 2.5;
};

inline dvr::SpectralDecomposition dvr_spectrum(const DvrGridSpec& g, const PotentialModel& pot, double mass) {
  const auto grid = dvr::make_grid(g.n_points, g.x_left, g.x_right);
  return dvr::eigensolve(dvr::build_hamiltonian(grid, pot, PhysicalSystem(mass)));
}

/// Picks the candidate mass whose two lowest DVR levels are closest to the
/// reference doublet. Ties go to the earlier candidate.
inline MassResolution resolve_mass(const DoubleWell& w, const std::vector<double>& candidates,
                                   const std::vector<double>& doublet_cm, double tolerance_cm, const DvrGridSpec& g,
                                   double wavenumber_per_hartree) {
  if (candidates.empty()) throw ConfigError("dvr.mass_candidates is empty");
  if (doublet_cm.size() != 2) throw ConfigError("dvr.doublet needs two energies");
  MassResolution r;
  r.tolerance_cm = tolerance_cm;
  for (double m : candidates) {
    const auto d = dvr_spectrum(g, w, m);
    MassCandidate c;
    c.mass = m;
    c.e_plus_cm = d.eigenvalues(0) * wavenumber_per_hartree;
    c.e_minus_cm = d.eigenvalues(1) * wavenumber_per_hartree;
    c.residual_cm = std::max(std::abs(c.e_plus_cm - doublet_cm[0]), std::abs(c.e_minus_cm - doublet_cm[1]));
    r.candidates.push_back(c);
  }
  for (std::size_t i = 1; i < r.candidates.size(); ++i)
    if (r.candidates[i].residual_cm < r.candidates[r.chosen].residual_cm) r.chosen = i;
  r.matched = r.adopted().residual_cm <= tolerance_cm;
  return r;
}

// ---------------------------------------------------------------------------
// Resolved setup

struct Setup {
  std::string name;
  Engine engine = Engine::Mwls;
  PhysicalSystem system;
  PotentialModel potential = ZeroPotential{};
  std::string potential_kind;
  double x0 = 0.0;
  double beta = 1.0;
  double span = 1.0;
  std::size_t n_particles = 100;
  lagrangian::StepController controller;
  double t_end = 0.0;
  double sample_dt = 1.0;
  double density_dt = 1.0;
  lagrangian::DynamicsOptions dynamics;
  DvrGridSpec dvr_grid;
  double dvr_dt_int = 0.25;
  double wavenumber_per_hartree = kHartreeToWavenumber;
  std::optional<MassResolution> mass_resolution;
  std::optional<double> barrier_height;  // V_b in hartree, double-well runs
  double quoted_barrier_cm = 0.0;
  std::optional<analytic::TwoStateModel> two_state;
  double compare_t_start = 0.0;
  double compare_t_stop = 0.0;
  io::ManifestSection resolved{"resolved", {}};
};

namespace detail {

inline bool is_multiple(double a, double b) {
  const double r = a / b;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
}

}  // namespace detail

inline Setup resolve(const ExperimentConfig& c) {
  Setup s;
  auto& out = s.resolved;
  s.name = c.raw("name");
  s.engine = engine_from_string(c.raw("engine"));
  out.add("name", s.name);
  out.add("engine", to_string(s.engine));

  s.potential_kind = c.raw("system.potential");
  const bool double_well = s.potential_kind == "doublewell";
  const bool harmonic = s.potential_kind == "harmonic";
  DoubleWell dw{c.number("system.a"), c.number("system.b")};
  DvrGridSpec grid{c.count("dvr.n_points"), c.number("dvr.x_left"), c.number("dvr.x_right")};
  s.dvr_grid = grid;
  s.wavenumber_per_hartree = c.number("dvr.wavenumber_per_hartree");

  // Mass
  double mass = 0.0;
  if (c.raw("system.mass") == "resolve") {
    if (!double_well) throw ConfigError("system.mass = resolve needs the double-well potential");
    s.mass_resolution = resolve_mass(dw, c.numbers("dvr.mass_candidates"), c.numbers("dvr.doublet"),
                                     c.number("dvr.doublet_tolerance"), grid, s.wavenumber_per_hartree);
    mass = s.mass_resolution->adopted().mass;
    out.add("system.mass", mass);
    out.add("system.mass_source", "doublet resolution");
  } else {
    mass = c.number("system.mass");
    out.add("system.mass", mass);
    out.add("system.mass_source", "config");
  }
  s.system = PhysicalSystem(mass);
  out.add("system.hbar", s.system.hbar);

  // Potential
  double omega = 0.0;
  out.add("system.potential", s.potential_kind);
  if (harmonic) {
    const double period = c.number("system.period");
    if (!(period > 0.0)) throw ConfigError("system.period must be positive");
    omega = analytic::coherent_period_to_omega(period);
    s.potential = Harmonic{omega, c.number("system.center"), mass};
    out.add("system.period", period);
    out.add("system.omega", omega);
    out.add("system.center", c.number("system.center"));
  } else if (double_well) {
    s.potential = dw;
    out.add("system.a", dw.a);
    out.add("system.b", dw.b);
  } else if (s.potential_kind == "polynomial") {
    s.potential = PolynomialCoeffs{c.numbers("system.coeffs")};
    out.add("system.coeffs", io::fmt_list(std::get<PolynomialCoeffs>(s.potential).coeffs));
  } else if (s.potential_kind == "zero") {
    s.potential = ZeroPotential{};
  } else {
    throw ConfigError("unknown potential '" + s.potential_kind + "'");
  }
  validate(s.potential);

  // Initial state
  const std::string x0 = c.raw("initial.x0");
  if (x0 == "well") {
    if (!double_well) throw ConfigError("initial.x0 = well needs the double-well potential");
    s.x0 = analytic::well_minimum(dw);
  } else {
    s.x0 = c.number("initial.x0");
  }
  out.add("initial.x0", s.x0);
  out.add("initial.x0_source", x0 == "well" ? "sqrt(b / 2a)" : "config");

  const std::string beta = c.raw("initial.beta");
  std::string beta_source = "config";
  if (beta == "coherent") {
    if (!harmonic) throw ConfigError("initial.beta = coherent needs the harmonic potential");
    s.beta = mass * omega / kHbar;
    beta_source = "m omega / hbar";
  } else if (beta == "well") {
    if (!double_well) throw ConfigError("initial.beta = well needs the double-well potential");
    s.beta = analytic::well_beta(dw, mass);
    beta_source = "sqrt(4 b m)";
  } else {
    s.beta = c.number("initial.beta");
  }
  out.add("initial.beta", s.beta);
  out.add("initial.beta_source", beta_source);

  s.n_particles = c.count("initial.n_particles");
  out.add("initial.n_particles", s.n_particles);
  s.span = c.raw("initial.span") == "auto" ? default_span(s.beta) : c.number("initial.span");
  out.add("initial.span", s.span);
  out.add("initial.span_source", c.raw("initial.span") == "auto" ? "6 / sqrt(beta)" : "config");

  // Integration
  auto& ctl = s.controller;
  ctl.dt = c.number("integration.dt0");
  ctl.tol = c.number("integration.tol");
  ctl.dt_min = c.number("integration.dt_min");
  ctl.dt_max = c.number("integration.dt_max");
  ctl.validate();
  s.t_end = c.number("integration.t_end");
  s.sample_dt = c.number("integration.sample_dt");
  s.density_dt = c.number("output.density_dt");
  if (!(s.t_end > 0.0)) throw ConfigError("integration.t_end must be positive");
  if (!(s.sample_dt > 0.0)) throw ConfigError("integration.sample_dt must be positive");
  if (!(s.density_dt > 0.0) || !detail::is_multiple(s.density_dt, s.sample_dt))
    throw ConfigError("output.density_dt must be a positive multiple of integration.sample_dt");
  out.add("integration.dt0", ctl.dt);
  out.add("integration.tol", ctl.tol);
  out.add("integration.dt_min", ctl.dt_min);
  out.add("integration.dt_max", ctl.dt_max);
  out.add("integration.shrink", ctl.shrink);
  out.add("integration.grow", ctl.grow);
  out.add("integration.corrector_passes", static_cast<double>(lagrangian::kCorrectorPasses));
  out.add("integration.t_end", s.t_end);
  out.add("integration.sample_dt", s.sample_dt);
  out.add("output.density_dt", s.density_dt);

  // MWLS
  auto& dyn = s.dynamics;
  dyn.basis.order = static_cast<int>(c.count("mwls.order"));
  dyn.basis.family = mwls::basis_family_from_string(c.raw("mwls.basis"));
  mwls::validate(dyn.basis);
  dyn.n_neighbors = c.raw("mwls.n_neighbors") == "auto" ? mwls::default_neighbors(dyn.basis) : c.count("mwls.n_neighbors");
  dyn.quantum = s.engine != Engine::Classical;
  dyn.smoothing_order = static_cast<int>(c.count("mwls.smoothing_order"));
  dyn.smoothing_neighbors = c.count("mwls.smoothing_neighbors");
  if (dyn.smoothing_order > 0 && dyn.smoothing_neighbors < static_cast<std::size_t>(dyn.smoothing_order) + 1)
    throw ConfigError("mwls.smoothing_neighbors must exceed mwls.smoothing_order");
  if (dyn.n_neighbors < static_cast<std::size_t>(dyn.basis.order))
    throw ConfigError("mwls.n_neighbors must be at least mwls.order");
  if (s.n_particles < dyn.n_neighbors + 1) throw ConfigError("initial.n_particles must exceed mwls.n_neighbors");
  out.add("mwls.order", static_cast<double>(dyn.basis.order));
  out.add("mwls.basis", mwls::to_string(dyn.basis.family));
  out.add("mwls.n_neighbors", dyn.n_neighbors);
  out.add("mwls.weight_at_edge", 0.01);
  out.add("mwls.singular_cutoff", mwls::kSingularCutoff);
  out.add("mwls.quantum_potential", dyn.quantum ? "on" : "off");
  out.add("mwls.smoothing_order", static_cast<double>(dyn.quantum ? dyn.smoothing_order : 0));
  out.add("mwls.smoothing_neighbors", dyn.smoothing_neighbors);

  // DVR
  s.dvr_dt_int = c.number("dvr.dt_int");
  if (!(s.dvr_dt_int > 0.0)) throw ConfigError("dvr.dt_int must be positive");
  if ((s.engine == Engine::Dvr || s.engine == Engine::Compare) && !detail::is_multiple(s.sample_dt, s.dvr_dt_int))
    throw ConfigError("integration.sample_dt must be a multiple of dvr.dt_int");
  out.add("dvr.n_points", grid.n_points);
  out.add("dvr.x_left", grid.x_left);
  out.add("dvr.x_right", grid.x_right);
  out.add("dvr.dt_int", s.dvr_dt_int);
  out.add("dvr.density_floor", dvr::kDensityFloor);
  out.add("dvr.wavenumber_per_hartree", s.wavenumber_per_hartree);

  // Double-well extras: barrier height and two-state oracle.
  s.quoted_barrier_cm = c.number("barrier.quoted_cm");
  if (double_well) {
    const std::string ref = c.raw("barrier.reference");
    s.barrier_height = ref == "analytic" ? analytic::barrier_height(dw) : c.number("barrier.reference") / s.wavenumber_per_hartree;
    out.add("barrier.V_b", *s.barrier_height);
    out.add("barrier.V_b_source", ref == "analytic" ? "b^2 / 4a" : "config (cm^-1)");
    const auto spec = dvr_spectrum(grid, dw, mass);
    s.two_state = analytic::make_two_state(dw, mass, spec.eigenvalues(0), spec.eigenvalues(1));
    out.add("two_state.omega0", s.two_state->omega0);
    out.add("two_state.omega_split", s.two_state->omega_split);
  }

  s.compare_t_start = c.number("compare.t_start");
  s.compare_t_stop = c.raw("compare.t_stop") == "auto" ? s.t_end : c.number("compare.t_stop");
  out.add("compare.t_start", s.compare_t_start);
  out.add("compare.t_stop", s.compare_t_stop);
  out.add("labels", kLabelConvention);

  // Keys that do not apply to this run are still listed, marked unused.
  for (const auto& [key, def] : ExperimentConfig::schema()) {
    const bool listed = std::any_of(out.entries.begin(), out.entries.end(), [&](const auto& e) { return e.first == key; });
    if (!listed) out.add(key, (c.raw(key).empty() ? std::string("\"\"") : c.raw(key)) + " (unused)");
  }
  return s;
}

inline Ensemble initial_ensemble(const Setup& s) {
  return init_gaussian_ensemble(s.system, s.potential, s.x0, s.beta, s.n_particles, s.span);
}

// ---------------------------------------------------------------------------
// Comparison of two records

class PairingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ComparisonOptions {
  double t_start = 0.0;
  double t_stop = std::numeric_limits<double>::infinity();
  /// (slot in a, slot in b); empty pairs every slot with itself.
  std::vector<std::pair<std::size_t, std::size_t>> pairing;
  /// Largest allowed difference between paired starting positions.
  double start_tolerance = 1e-9;
};

struct PairDeviation {
  std::size_t slot_a = 0;
  std::size_t slot_b = 0;
  std::size_t label = 0;  // 1-based slot in a
  double max_dev = 0.0;
  double rms_dev = 0.0;
  double t_max_dev = 0.0;
  std::size_t samples = 0;
  bool highlighted = false;
};

struct ComparisonReport {
  std::string label_a;
  std::string label_b;
  double t_start = 0.0;
  double t_stop = 0.0;
  std::vector<PairDeviation> pairs;

  const PairDeviation& by_label(std::size_t label) const {
    for (const auto& p : pairs)
      if (p.label == label) return p;
    throw std::out_of_range("no pair with label " + std::to_string(label));
  }
};

/// Linear interpolation of slot k of a record at time t (t inside the record).
inline double interpolate_position(const TrajectoryRecord& r, std::size_t k, double t) {
  const auto& f = r.frames;
  if (f.empty()) throw std::invalid_argument("empty record");
  if (t <= f.front().t) return f.front().elements.at(k).x;
  if (t >= f.back().t) return f.back().elements.at(k).x;
  const auto it = std::upper_bound(f.begin(), f.end(), t, [](double tv, const RecordFrame& fr) { return tv < fr.t; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  return (1.0 - w) * lo.elements.at(k).x + w * hi.elements.at(k).x;
}

/// Position deviations between paired trajectories of two records, sampled
/// at the times of `a` that fall inside the common window.
inline ComparisonReport compare_trajectories(const TrajectoryRecord& a, const TrajectoryRecord& b,
                                             const ComparisonOptions& opt = {}) {
  if (a.frames.empty() || b.frames.empty()) throw PairingError("cannot compare empty records");
  auto pairing = opt.pairing;
  if (pairing.empty()) {
    if (a.element_count() != b.element_count())
      throw PairingError("records have " + std::to_string(a.element_count()) + " and " +
                         std::to_string(b.element_count()) + " elements");
    for (std::size_t k = 0; k < a.element_count(); ++k) pairing.emplace_back(k, k);
  }
  if (a.frames.front().t != b.frames.front().t) throw PairingError("records start at different times");
  for (const auto& [ka, kb] : pairing) {
    if (ka >= a.element_count() || kb >= b.element_count()) throw PairingError("pairing refers to a missing element");
    const double xa = a.frames.front().elements[ka].x;
    const double xb = b.frames.front().elements[kb].x;
    if (std::abs(xa - xb) > opt.start_tolerance * std::max(1.0, std::abs(xa)))
      throw PairingError("paired elements " + std::to_string(ka + 1) + "/" + std::to_string(kb + 1) +
                         " start at different positions");
  }

  ComparisonReport rep;
  rep.label_a = a.label;
  rep.label_b = b.label;
  rep.t_start = std::max({opt.t_start, a.frames.front().t, b.frames.front().t});
  rep.t_stop = std::min({opt.t_stop, a.frames.back().t, b.frames.back().t});
  if (!(rep.t_stop >= rep.t_start)) throw PairingError("records do not overlap in the requested window");

  for (const auto& [ka, kb] : pairing) {
    PairDeviation p;
    p.slot_a = ka;
    p.slot_b = kb;
    p.label = ka + 1;
    p.highlighted = std::find(kHighlightLabels.begin(), kHighlightLabels.end(), p.label) != kHighlightLabels.end();
    double sum2 = 0.0;
    for (const auto& f : a.frames) {
      if (f.t < rep.t_start || f.t > rep.t_stop) continue;
      const double d = std::abs(f.elements[ka].x - interpolate_position(b, kb, f.t));
      if (d > p.max_dev) {
        p.max_dev = d;
        p.t_max_dev = f.t;
      }
      sum2 += d * d;
      ++p.samples;
    }
    p.rms_dev = p.samples ? std::sqrt(sum2 / static_cast<double>(p.samples)) : 0.0;
    rep.pairs.push_back(p);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Engines

struct BarrierSample {
  double t = 0.0;
  double Q0 = 0.0;    // quantum potential at x = 0
  double V_eff = 0.0; // Q0 + V_b
};

struct DensitySnapshot {
  double t = 0.0;
  std::vector<double> x, rho, Q, V;
};

struct EngineRun {
  TrajectoryRecord record;
  std::vector<BarrierSample> barrier;
  std::vector<DensitySnapshot> density;
  Termination termination = Termination::EndTime;
  std::string detail;
  double t_final = 0.0;
  std::optional<double> crossing_time;
  std::vector<double> final_positions;
  io::ManifestSection stats{"", {}};

  bool terminal() const { return termination != Termination::EndTime; }
};

namespace detail {

/// Sample times k * sample_dt up to t_end, with t_end appended if it is not on the grid.
inline std::vector<double> sample_times(double sample_dt, double t_end) {
  std::vector<double> t{0.0};
  const auto n = static_cast<long>(std::floor(t_end / sample_dt + 1e-9));
  for (long k = 1; k <= n; ++k) t.push_back(static_cast<double>(k) * sample_dt);
  if (t_end - t.back() > 1e-9 * sample_dt) t.push_back(t_end);
  return t;
}

/// Q at x = 0 from the g-jet of the stencil whose centre is nearest the origin.
inline double mwls_barrier_Q(const Ensemble& e, const lagrangian::DynamicsOptions& dyn) {
  const auto x = e.positions();
  std::size_t c = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (std::abs(x[i]) < std::abs(x[c])) c = i;
  std::vector<double> g(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) g[i] = e.elements[i].g;
  const mwls::LocalFit fit(mwls::select_stencil(std::span<const double>(x), c, dyn.n_neighbors), dyn.basis);
  return mwls::quantum_potential(mwls::shift_jet(fit.fit_field(g), -x[c]), e.system);
}

}  // namespace detail

inline EngineRun run_lagrangian(const Setup& s) {
  EngineRun r;
  r.record.label = s.dynamics.quantum ? "mwls" : "classical";
  r.stats.name = r.record.label;
  const auto& dyn = s.dynamics;
  auto ctl = s.controller;
  Ensemble e = initial_ensemble(s);

  std::size_t steps = 0, rejected = 0;
  double max_norm_error = std::abs(lagrangian::check_norm(e) - 1.0);
  double min_dt = std::numeric_limits<double>::infinity(), max_dt = 0.0, min_gap = min_spacing(e);

  auto record = [&](double t) {
    const auto f = lagrangian::sample_fields(e, dyn);
    RecordFrame frame{t, {}};
    frame.elements.reserve(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const auto& el = e.elements[i];
      ElementSample es;
      es.index = i;
      es.x = el.x;
      es.v = el.v;
      es.rho = std::exp(el.g);
      es.Q = f.Q[i];
      es.V = potential_value(e.potential, el.x);
      es.S = el.S;
      es.logJ = el.logJ;
      es.E = f.energy[i];
      frame.elements.push_back(es);
    }
    if (s.barrier_height) {
      const double q0 = dyn.quantum ? detail::mwls_barrier_Q(e, dyn) : 0.0;
      r.barrier.push_back({t, q0, analytic::effective_barrier(q0, *s.barrier_height)});
    }
    if (detail::is_multiple(t, s.density_dt)) {
      DensitySnapshot d{t, {}, {}, {}, {}};
      for (const auto& es : frame.elements) {
        d.x.push_back(es.x);
        d.rho.push_back(es.rho);
        d.Q.push_back(es.Q);
        d.V.push_back(es.V);
      }
      r.density.push_back(std::move(d));
    }
    r.record.push(std::move(frame));
  };

  const auto times = detail::sample_times(s.sample_dt, s.t_end);
  // Advances to `target`; false once the trajectories cross.
  auto advance = [&](double target) {
    while (e.t < target) {
      const double remaining = target - e.t;
      lagrangian::AdaptiveOutcome out;
      const bool landing = ctl.dt >= remaining;
      if (landing) {
        // Shorten the step to land on the sample time; keep the proposal.
        auto trial = ctl;
        trial.dt = remaining;
        trial.dt_min = std::min(ctl.dt_min, remaining * ctl.shrink);
        out = lagrangian::adaptive_step(e, trial, dyn);
        if (!out.diagnostics.accepted) ctl.dt = std::max(trial.dt, ctl.dt_min);
      } else {
        out = lagrangian::adaptive_step(e, ctl, dyn);
      }
      ++steps;
      if (!out.diagnostics.accepted) ++rejected;
      min_dt = std::min(min_dt, out.diagnostics.dt_used);
      max_dt = std::max(max_dt, out.diagnostics.dt_used);
      e = std::move(out.state);
      if (out.diagnostics.crossing_detected) {
        r.termination = Termination::Crossing;
        r.crossing_time = e.t;
        r.detail = "trajectories crossed";
        return false;
      }
      if (landing) e.t = target;
      min_gap = std::min(min_gap, min_spacing(e));
      max_norm_error = std::max(max_norm_error, std::abs(lagrangian::check_norm(e) - 1.0));
    }
    return true;
  };
  try {
    record(0.0);
    for (std::size_t k = 1; k < times.size(); ++k) {
      if (!advance(times[k])) break;
      record(times[k]);
    }
  } catch (const StiffnessError& ex) {
    r.termination = Termination::Stiffness;
    r.detail = ex.what();
  } catch (const DegenerateGeometryError& ex) {
    r.termination = Termination::DegenerateGeometry;
    r.detail = ex.what();
  }
  r.t_final = e.t;
  r.final_positions = e.positions();
  r.stats.add("steps", steps);
  r.stats.add("rejected_steps", rejected);
  r.stats.add("min_dt", steps ? min_dt : 0.0);
  r.stats.add("max_dt", max_dt);
  r.stats.add("min_spacing", min_gap);
  r.stats.add("max_norm_error", max_norm_error);
  return r;
}

inline EngineRun run_dvr(const Setup& s) {
  EngineRun r;
  r.record.label = "dvr";
  r.stats.name = "dvr";
  const auto grid = dvr::make_grid(s.dvr_grid.n_points, s.dvr_grid.x_left, s.dvr_grid.x_right);
  auto decomp = dvr::eigensolve(dvr::build_hamiltonian(grid, s.potential, s.system));
  std::vector<double> levels;
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(4, decomp.eigenvalues.size()); ++k)
    levels.push_back(decomp.eigenvalues(k) * s.wavenumber_per_hartree);
  const dvr::SpectralPropagator prop(dvr::gaussian_state(grid, s.x0, s.beta), std::move(decomp));

  const auto x_start = initial_ensemble(s).positions();
  dvr::PilotOptions po;
  po.dt_out = s.sample_dt;
  po.t_end = s.t_end;
  po.dt_int = s.dvr_dt_int;
  try {
    auto run = dvr::integrate_pilot_trajectories(x_start, prop, s.potential, s.system, po);
    r.record = std::move(run.record);
    r.stats.add("density_floor_hits", run.floor_hits);
  } catch (const std::out_of_range& ex) {
    r.termination = Termination::LeftBox;
    r.detail = ex.what();
  } catch (const std::runtime_error& ex) {
    r.termination = Termination::LeftBox;
    r.detail = ex.what();
  }
  r.t_final = r.record.frames.empty() ? 0.0 : r.record.frames.back().t;
  if (!r.record.frames.empty())
    for (const auto& es : r.record.frames.back().elements) r.final_positions.push_back(es.x);

  for (const auto& f : r.record.frames) {
    const bool snap = detail::is_multiple(f.t, s.density_dt);
    if (!s.barrier_height && !snap) continue;
    const auto wf = prop.wavefunction(f.t);
    if (s.barrier_height) {
      const double q0 = dvr::quantum_potential(wf.evaluate(0.0), s.system.mass);
      r.barrier.push_back({f.t, q0, analytic::effective_barrier(q0, *s.barrier_height)});
    }
    if (snap) {
      DensitySnapshot d{f.t, {}, {}, {}, {}};
      for (double x : grid.points) {
        const auto jet = wf.evaluate(x);
        d.x.push_back(x);
        d.rho.push_back(std::norm(jet.psi));
        d.Q.push_back(dvr::quantum_potential(jet, s.system.mass));
        d.V.push_back(potential_value(s.potential, x));
      }
      r.density.push_back(std::move(d));
    }
  }
  r.stats.add("lowest_levels_cm", io::fmt_list(levels));
  return r;
}

/// Closed-form coherent state (harmonic well, beta = m omega / hbar).
inline EngineRun run_analytic(const Setup& s) {
  const auto* h = std::get_if<Harmonic>(&s.potential);
  if (!h) throw ConfigError("the analytic engine needs the harmonic potential");
  if (h->center != 0.0) throw ConfigError("the analytic engine needs system.center = 0");
  const analytic::CoherentModel model{s.system.mass, h->omega, s.x0};
  if (std::abs(s.beta - model.beta()) > 1e-12 * model.beta())
    throw ConfigError("the analytic engine needs initial.beta = coherent");

  EngineRun r;
  r.record.label = "analytic";
  r.stats.name = "analytic";
  const Ensemble e = initial_ensemble(s);
  for (double t : detail::sample_times(s.sample_dt, s.t_end)) {
    RecordFrame frame{t, {}};
    for (std::size_t i = 0; i < e.size(); ++i) {
      ElementSample es;
      es.index = i;
      es.x = analytic::coherent_trajectory(model, e.elements[i].x, t);
      es.v = analytic::coherent_velocity(model, t);
      es.rho = std::exp(e.elements[i].g);  // rigid translation
      es.Q = analytic::coherent_quantum_potential(model, es.x, t);
      es.V = potential_value(s.potential, es.x);
      const auto ae = analytic::coherent_action_energy(model, es.x, t);
      es.S = ae.S;
      es.E = ae.E;
      frame.elements.push_back(es);
    }
    if (detail::is_multiple(t, s.density_dt)) {
      DensitySnapshot d{t, {}, {}, {}, {}};
      for (const auto& es : frame.elements) {
        d.x.push_back(es.x);
        d.rho.push_back(es.rho);
        d.Q.push_back(es.Q);
        d.V.push_back(es.V);
      }
      r.density.push_back(std::move(d));
    }
    r.record.push(std::move(frame));
  }
  r.t_final = r.record.frames.back().t;
  for (const auto& es : r.record.frames.back().elements) r.final_positions.push_back(es.x);
  return r;
}

// ---------------------------------------------------------------------------
// Experiment

struct RunResult {
  Setup setup;
  EngineRun primary;
  std::optional<EngineRun> reference;
  std::optional<ComparisonReport> comparison;

  int exit_code() const {
    const bool terminal = primary.terminal() || (reference && reference->terminal());
    return terminal ? kExitPhysicsTerminal : kExitSuccess;
  }

  io::Manifest manifest() const;
};

inline RunResult run_experiment(const Setup& s) {
  RunResult res;
  res.setup = s;
  switch (s.engine) {
    case Engine::Mwls:
    case Engine::Classical: res.primary = run_lagrangian(s); break;
    case Engine::Dvr: res.primary = run_dvr(s); break;
    case Engine::Analytic: res.primary = run_analytic(s); break;
    case Engine::Compare: {
      res.primary = run_lagrangian(s);
      res.reference = run_dvr(s);
      ComparisonOptions opt;
      opt.t_start = s.compare_t_start;
      opt.t_stop = s.compare_t_stop;
      if (!res.primary.record.frames.empty() && !res.reference->record.frames.empty())
        res.comparison = compare_trajectories(res.primary.record, res.reference->record, opt);
      break;
    }
  }
  return res;
}

inline RunResult run_experiment(const ExperimentConfig& c) { return run_experiment(resolve(c)); }

namespace detail {

inline io::ManifestSection engine_section(const std::string& name, const EngineRun& r) {
  io::ManifestSection sec{name, {}};
  sec.add("termination", to_string(r.termination));
  if (!r.detail.empty()) sec.add("detail", r.detail);
  sec.add("t_final", r.t_final);
  sec.add("crossing_time", r.crossing_time ? io::fmt(*r.crossing_time) : std::string("none"));
  sec.add("frames", r.record.frames.size());
  for (const auto& [k, v] : r.stats.entries) sec.add(k, v);
  return sec;
}

}  // namespace detail

inline io::Manifest RunResult::manifest() const {
  io::Manifest m;
  io::ManifestSection run{"run", {}};
  run.add("name", setup.name);
  run.add("engine", to_string(setup.engine));
  run.add("exit_status", std::to_string(exit_code()));
  run.add("termination", to_string(primary.termination));
  run.add("crossing_time", primary.crossing_time ? io::fmt(*primary.crossing_time) : std::string("none"));
  m.push_back(run);
  m.push_back(setup.resolved);

  if (setup.mass_resolution) {
    const auto& mr = *setup.mass_resolution;
    io::ManifestSection sec{"mass_resolution", {}};
    sec.add("adopted_mass", mr.adopted().mass);
    sec.add("matched", mr.matched ? "yes" : "no");
    sec.add("tolerance_cm", mr.tolerance_cm);
    sec.add("outcome", mr.matched ? "candidate reproduces the reference doublet"
                                  : "no candidate within tolerance; nearest adopted, residual reported");
    for (const auto& c : mr.candidates) {
      const std::string p = "m_" + io::fmt(c.mass);
      sec.add(p + ".E_plus_cm", c.e_plus_cm);
      sec.add(p + ".E_minus_cm", c.e_minus_cm);
      sec.add(p + ".residual_cm", c.residual_cm);
    }
    m.push_back(sec);
  }
  if (setup.barrier_height) {
    io::ManifestSection sec{"barrier", {}};
    const double vb_cm = *setup.barrier_height * setup.wavenumber_per_hartree;
    sec.add("V_b_hartree", *setup.barrier_height);
    sec.add("V_b_cm", vb_cm);
    sec.add("reference_cm", setup.quoted_barrier_cm);
    sec.add("discrepancy_cm", vb_cm - setup.quoted_barrier_cm);
    m.push_back(sec);
  }
  m.push_back(detail::engine_section("engine." + primary.record.label, primary));
  if (reference) m.push_back(detail::engine_section("engine." + reference->record.label, *reference));
  if (comparison) {
    io::ManifestSection sec{"comparison", {}};
    sec.add("window_start", comparison->t_start);
    sec.add("window_stop", comparison->t_stop);
    double worst = 0.0;
    for (const auto& p : comparison->pairs) worst = std::max(worst, p.max_dev);
    sec.add("max_deviation", worst);
    for (const auto& p : comparison->pairs)
      if (p.highlighted) sec.add("label_" + std::to_string(p.label) + ".max_dev", p.max_dev);
    m.push_back(sec);
  }
  io::ManifestSection conv{"conventions", {}};
  conv.add("trajectory_labels", kLabelConvention);
  conv.add("units", "atomic units (hbar = 1, bohr, hartree)");
  m.push_back(conv);
  return m;
}

// ---------------------------------------------------------------------------
// Plot data

enum class PlotKind { Trajectories, DensitySnapshots, BarrierSeries, Comparison };

inline PlotKind plot_kind_from_string(const std::string& s) {
  if (s == "trajectories") return PlotKind::Trajectories;
  if (s == "density-snapshots") return PlotKind::DensitySnapshots;
  if (s == "barrier-series") return PlotKind::BarrierSeries;
  if (s == "comparison") return PlotKind::Comparison;
  throw ConfigError("unknown plot kind '" + s + "'");
}

inline void write_density(std::ostream& os, const std::vector<DensitySnapshot>& snaps, const std::string& label) {
  os << "# density snapshots " << label << ", one block per time, blocks separated by two blank lines\n";
  os << "# x [bohr] rho [1/bohr] Q [hartree] V [hartree] V+Q [hartree]\n";
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    const auto& d = snaps[k];
    if (k) os << "\n\n";
    os << "# t = " << io::fmt(d.t) << '\n';
    for (std::size_t i = 0; i < d.x.size(); ++i)
      os << io::fmt(d.x[i]) << ' ' << io::fmt(d.rho[i]) << ' ' << io::fmt(d.Q[i]) << ' ' << io::fmt(d.V[i]) << ' '
         << io::fmt(d.V[i] + d.Q[i]) << '\n';
  }
}

inline void write_barrier(std::ostream& os, const std::vector<BarrierSample>& b, const Setup& s,
                          const std::string& label) {
  os << "# barrier series " << label << ": V_eff = Q(0, t) + V_b, V_b = " << io::fmt(s.barrier_height.value_or(0.0))
     << " hartree\n";
  os << "# t [a.u.] Q0 [hartree] V_eff [hartree] V_eff_two_state [hartree]\n";
  for (const auto& p : b) {
    const double oracle = s.two_state ? analytic::effective_barrier(analytic::two_state_Q_barrier(*s.two_state, p.t),
                                                                    s.barrier_height.value_or(0.0))
                                      : std::numeric_limits<double>::quiet_NaN();
    os << io::fmt(p.t) << ' ' << io::fmt(p.Q0) << ' ' << io::fmt(p.V_eff) << ' ' << io::fmt(oracle) << '\n';
  }
}

/// Per-pair summary followed by the paired time series of the highlighted labels.
inline void write_comparison(std::ostream& os, const ComparisonReport& rep, const TrajectoryRecord& a,
                             const TrajectoryRecord& b) {
  os << "# comparison " << rep.label_a << " vs " << rep.label_b << ", window [" << io::fmt(rep.t_start) << ", "
     << io::fmt(rep.t_stop) << "] a.u.\n";
  os << "# label max_dev [bohr] rms_dev [bohr] t_max_dev [a.u.] samples highlighted\n";
  for (const auto& p : rep.pairs)
    os << p.label << ' ' << io::fmt(p.max_dev) << ' ' << io::fmt(p.rms_dev) << ' ' << io::fmt(p.t_max_dev) << ' '
       << p.samples << ' ' << (p.highlighted ? 1 : 0) << '\n';
  for (const auto& p : rep.pairs) {
    if (!p.highlighted) continue;
    os << "\n\n# label " << p.label << ": t [a.u.] x_" << rep.label_a << " [bohr] x_" << rep.label_b << " [bohr]\n";
    for (const auto& f : a.frames) {
      if (f.t < rep.t_start || f.t > rep.t_stop) continue;
      os << io::fmt(f.t) << ' ' << io::fmt(f.elements[p.slot_a].x) << ' '
         << io::fmt(interpolate_position(b, p.slot_b, f.t)) << '\n';
    }
  }
}

inline void emit_plot_data(const RunResult& r, PlotKind kind, std::ostream& os) {
  switch (kind) {
    case PlotKind::Trajectories: io::write_trajectories(os, r.primary.record); break;
    case PlotKind::DensitySnapshots: write_density(os, r.primary.density, r.primary.record.label); break;
    case PlotKind::BarrierSeries: write_barrier(os, r.primary.barrier, r.setup, r.primary.record.label); break;
    case PlotKind::Comparison:
      if (!r.comparison) throw ConfigError("no comparison in this run");
      write_comparison(os, *r.comparison, r.primary.record, r.reference->record);
      break;
  }
}

/// Writes every output of a run into `dir`; returns the file names written.
inline std::vector<std::string> write_outputs(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    written.push_back(name);
    return f;
  };
  {
    auto f = open("manifest.txt");
    io::write_manifest(f, r.manifest());
  }
  {
    auto f = open("records.dat");
    io::write_record(f, r.primary.record);
  }
  {
    auto f = open("trajectories.dat");
    emit_plot_data(r, PlotKind::Trajectories, f);
  }
  {
    auto f = open("density.dat");
    emit_plot_data(r, PlotKind::DensitySnapshots, f);
  }
  if (r.setup.barrier_height) {
    auto f = open("barrier.dat");
    emit_plot_data(r, PlotKind::BarrierSeries, f);
  }
  if (r.reference) {
    {
      auto f = open("reference_records.dat");
      io::write_record(f, r.reference->record);
    }
    {
      auto f = open("reference_trajectories.dat");
      io::write_trajectories(f, r.reference->record);
    }
    {
      auto f = open("reference_density.dat");
      write_density(f, r.reference->density, r.reference->record.label);
    }
    if (r.setup.barrier_height) {
      auto f = open("reference_barrier.dat");
      write_barrier(f, r.reference->barrier, r.setup, r.reference->record.label);
    }
  }
  if (r.comparison) {
    auto f = open("comparison.dat");
    emit_plot_data(r, PlotKind::Comparison, f);
  }
  return written;
}

}  // namespace qtraj::runner

#pragma once

// Sine (Gauss-Tchebychev) discrete variable representation on a box with
// hard walls, spectral propagation, FBR interpolation of psi off the grid and
// pilot-wave trajectories v = j / rho.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "qtraj/core.hpp"
#include "qtraj/record.hpp"

namespace qtraj::dvr {

using cplx = std::complex<double>;

struct DvrGrid {
  std::size_t n_points = 0;
  double x_left = 0.0;
  double x_right = 0.0;
  double delta = 0.0;  // box width
  std::vector<double> points;

  double spacing() const { return delta / static_cast<double>(n_points + 1); }
  bool inside(double x) const { return x > x_left && x < x_right; }
};

/// x_j = x_left + j delta / (N + 1), j = 1..N.
inline DvrGrid make_grid(std::size_t n, double x_left, double x_right) {
  if (n < 1) throw ConfigError("DVR grid needs at least one point");
  if (!(x_right > x_left)) throw ConfigError("DVR box must have x_right > x_left");
  DvrGrid g{n, x_left, x_right, x_right - x_left, {}};
  g.points.resize(n);
  for (std::size_t j = 1; j <= n; ++j) g.points[j - 1] = x_left + static_cast<double>(j) * g.spacing();
  return g;
}

/// U_ij = sqrt(2 / (N + 1)) sin(i j pi / (N + 1)); symmetric and U U = I.
inline Eigen::MatrixXd build_transform(std::size_t n) {
  if (n < 1) throw ConfigError("transform size must be at least 1");
  const auto N = static_cast<Eigen::Index>(n);
  const double norm = std::sqrt(2.0 / static_cast<double>(n + 1));
  const double f = std::numbers::pi / static_cast<double>(n + 1);
  Eigen::MatrixXd u(N, N);
  for (Eigen::Index i = 1; i <= N; ++i)
    for (Eigen::Index j = 1; j <= N; ++j) u(i - 1, j - 1) = norm * std::sin(static_cast<double>(i * j) * f);
  return u;
}

/// Wavenumbers k_i = i pi / delta of the box eigenfunctions.
inline Eigen::VectorXd wavenumbers(const DvrGrid& g) {
  Eigen::VectorXd k(static_cast<Eigen::Index>(g.n_points));
  for (Eigen::Index i = 0; i < k.size(); ++i) k(i) = static_cast<double>(i + 1) * std::numbers::pi / g.delta;
  return k;
}

/// H = U^T diag(hbar^2 k_i^2 / 2m) U + diag(V(x_j)), acting on DVR coefficients.
inline Eigen::MatrixXd build_hamiltonian(const DvrGrid& g, const PotentialModel& potential,
                                         const PhysicalSystem& system) {
  const auto u = build_transform(g.n_points);
  const Eigen::VectorXd k = wavenumbers(g);
  const Eigen::VectorXd kinetic = (system.hbar * system.hbar / (2.0 * system.mass)) * k.array().square();
  Eigen::MatrixXd h = u.transpose() * kinetic.asDiagonal() * u;
  for (std::size_t j = 0; j < g.n_points; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    h(jj, jj) += potential_value(potential, g.points[j]);
  }
  // Symmetrise away rounding so the eigensolver sees an exactly symmetric matrix.
  return 0.5 * (h + h.transpose());
}

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns, orthonormal
};

inline SpectralDecomposition eigensolve(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigensolve: no convergence");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// psi holds wavefunction values at the grid points; the DVR coefficients are
/// psi_j sqrt(spacing).
struct DvrState {
  DvrGrid grid;
  Eigen::VectorXcd psi;
  double t = 0.0;

  double norm() const { return psi.squaredNorm() * grid.spacing(); }
  Eigen::VectorXcd coefficients() const { return psi * std::sqrt(grid.spacing()); }
};

inline DvrState state_from_coefficients(const DvrGrid& g, const Eigen::VectorXcd& c, double t) {
  return {g, c / std::sqrt(g.spacing()), t};
}

/// Normalised psi = exp(-beta (x - x0)^2 / 2), i.e. rho = exp(-beta (x - x0)^2).
inline DvrState gaussian_state(const DvrGrid& g, double x0, double beta) {
  DvrState s{g, Eigen::VectorXcd(static_cast<Eigen::Index>(g.n_points)), 0.0};
  for (std::size_t j = 0; j < g.n_points; ++j) {
    const double d = g.points[j] - x0;
    s.psi(static_cast<Eigen::Index>(j)) = std::exp(-0.5 * beta * d * d);
  }
  s.psi /= std::sqrt(s.norm());
  return s;
}

/// psi(t + dt) = sum_k v_k exp(-i E_k dt / hbar) (v_k . psi(t)).
inline DvrState propagate(const DvrState& s, const SpectralDecomposition& d, double dt) {
  const Eigen::VectorXcd proj = d.eigenvectors.transpose() * s.coefficients();
  Eigen::VectorXcd phased(proj.size());
  for (Eigen::Index k = 0; k < proj.size(); ++k)
    phased(k) = proj(k) * std::polar(1.0, -d.eigenvalues(k) * dt / kHbar);
  return state_from_coefficients(s.grid, d.eigenvectors * phased, s.t + dt);
}

// ---------------------------------------------------------------------------
// FBR interpolation

struct PsiJet {
  cplx psi;
  cplx dpsi;
  cplx d2psi;
};

/// psi(x) = sum_i a_i T_i(x), T_i(x) = sqrt(2 / delta) sin(k_i (x - x_left)).
class FbrWavefunction {
 public:
  FbrWavefunction(const DvrGrid& g, Eigen::VectorXcd fbr) : grid_(g), fbr_(std::move(fbr)) {}

  static FbrWavefunction from_state(const DvrState& s) {
    return {s.grid, build_transform(s.grid.n_points).cast<cplx>() * s.coefficients()};
  }

  const Eigen::VectorXcd& coefficients() const { return fbr_; }

  PsiJet evaluate(double x) const {
    if (!grid_.inside(x)) throw std::out_of_range("FBR evaluation outside the box at x = " + std::to_string(x));
    const double theta = std::numbers::pi * (x - grid_.x_left) / grid_.delta;
    const double kunit = std::numbers::pi / grid_.delta;
    const double c1 = std::cos(theta);
    const double s1 = std::sin(theta);
    // sin(i theta), cos(i theta) by the three-term recurrence.
    double s_prev = 0.0, s_cur = s1;
    double c_prev = 1.0, c_cur = c1;
    PsiJet out{0.0, 0.0, 0.0};
    const auto n = fbr_.size();
    for (Eigen::Index i = 1; i <= n; ++i) {
      const double k = kunit * static_cast<double>(i);
      const cplx a = fbr_(i - 1);
      out.psi += a * s_cur;
      out.dpsi += a * (k * c_cur);
      out.d2psi += a * (-k * k * s_cur);
      const double s_next = 2.0 * c1 * s_cur - s_prev;
      const double c_next = 2.0 * c1 * c_cur - c_prev;
      s_prev = s_cur;
      s_cur = s_next;
      c_prev = c_cur;
      c_cur = c_next;
    }
    const double norm = std::sqrt(2.0 / grid_.delta);
    out.psi *= norm;
    out.dpsi *= norm;
    out.d2psi *= norm;
    return out;
  }

  double max_grid_density() const {
    double m = 0.0;
    for (double x : grid_.points) m = std::max(m, std::norm(evaluate(x).psi));
    return m;
  }

  const DvrGrid& grid() const { return grid_; }

 private:
  DvrGrid grid_;
  Eigen::VectorXcd fbr_;
};

inline PsiJet interpolate_psi(const DvrState& s, double x) { return FbrWavefunction::from_state(s).evaluate(x); }

/// Relative density floor below which the pilot velocity is not trusted.
inline constexpr double kDensityFloor = 1e-12;

struct PilotVelocity {
  double v = 0.0;
  bool below_floor = false;
};

/// v = (hbar / m) Im(psi* dpsi) / |psi|^2. Below the floor the velocity is
/// flagged and replaced by `fallback`.
inline PilotVelocity pilot_velocity(const PsiJet& jet, double mass, double rho_floor, double fallback = 0.0) {
  const double rho = std::norm(jet.psi);
  if (!(rho > rho_floor)) return {fallback, true};
  return {kHbar / mass * std::imag(std::conj(jet.psi) * jet.dpsi) / rho, false};
}

inline PilotVelocity pilot_velocity(const DvrState& s, const PhysicalSystem& sys, double x) {
  const auto wf = FbrWavefunction::from_state(s);
  return pilot_velocity(wf.evaluate(x), sys.mass, kDensityFloor * wf.max_grid_density());
}

/// Q = -(hbar^2 / 2m) (d2 |psi|) / |psi|, from the polar split of psi''/psi.
inline double quantum_potential(const PsiJet& jet, double mass) {
  const cplx r1 = jet.dpsi / jet.psi;
  const cplx r2 = jet.d2psi / jet.psi;
  const double s1 = std::imag(r1);
  return -(kHbar * kHbar / (2.0 * mass)) * (std::real(r2) + s1 * s1);
}

/// psi(t) in closed form from the eigen-decomposition of H.
class SpectralPropagator {
 public:
  SpectralPropagator(const DvrState& initial, SpectralDecomposition decomposition)
      : grid_(initial.grid), t0_(initial.t), decomposition_(std::move(decomposition)) {
    const Eigen::MatrixXd u = build_transform(grid_.n_points);
    fbr_modes_ = u * decomposition_.eigenvectors;
    projections_ = decomposition_.eigenvectors.transpose() * initial.coefficients();
  }

  Eigen::VectorXcd phased(double t) const {
    Eigen::VectorXcd p(projections_.size());
    for (Eigen::Index k = 0; k < p.size(); ++k)
      p(k) = projections_(k) * std::polar(1.0, -decomposition_.eigenvalues(k) * (t - t0_) / kHbar);
    return p;
  }

  FbrWavefunction wavefunction(double t) const { return {grid_, fbr_modes_ * phased(t)}; }

  DvrState state(double t) const { return state_from_coefficients(grid_, decomposition_.eigenvectors * phased(t), t); }

  const DvrGrid& grid() const { return grid_; }
  const SpectralDecomposition& decomposition() const { return decomposition_; }

 private:
  DvrGrid grid_;
  double t0_;
  SpectralDecomposition decomposition_;
  Eigen::MatrixXd fbr_modes_;
  Eigen::VectorXcd projections_;
};

struct PilotRun {
  TrajectoryRecord record;
  std::size_t floor_hits = 0;  // velocity evaluations below the density floor
};

struct PilotOptions {
  double dt_out = 10.0;
  double t_end = 1000.0;
  double dt_int = 0.25;  // RK4 step
};

/// Bohmian trajectories guided by the propagated wavefunction, integrated
/// with classical RK4; psi is evaluated exactly at every stage time.
inline PilotRun integrate_pilot_trajectories(const std::vector<double>& x_start, const SpectralPropagator& prop,
                                             const PotentialModel& potential, const PhysicalSystem& sys,
                                             const PilotOptions& opt) {
  const auto& grid = prop.grid();
  for (double x : x_start)
    if (!grid.inside(x)) throw std::out_of_range("pilot trajectory starts outside the box");
  if (!(opt.dt_int > 0.0) || !(opt.dt_out > 0.0)) throw ConfigError("pilot step sizes must be positive");

  const std::size_t n = x_start.size();
  std::vector<double> x = x_start;
  std::vector<double> last_v(n, 0.0);
  PilotRun run;
  run.record.label = "dvr";

  auto velocities = [&](double t, const std::vector<double>& pos) {
    const auto wf = prop.wavefunction(t);
    const double floor = kDensityFloor * wf.max_grid_density();
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!grid.inside(pos[i]))
        throw std::runtime_error("pilot trajectory " + std::to_string(i) + " left the box at t = " + std::to_string(t));
      const auto pv = pilot_velocity(wf.evaluate(pos[i]), sys.mass, floor, last_v[i]);
      if (pv.below_floor) ++run.floor_hits;
      v[i] = pv.v;
    }
    return v;
  };

  auto record = [&](double t) {
    const auto wf = prop.wavefunction(t);
    const double floor = kDensityFloor * wf.max_grid_density();
    RecordFrame f{t, {}};
    f.elements.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto jet = wf.evaluate(x[i]);
      ElementSample s;
      s.index = i;
      s.x = x[i];
      s.v = pilot_velocity(jet, sys.mass, floor, last_v[i]).v;
      s.rho = std::norm(jet.psi);
      s.Q = quantum_potential(jet, sys.mass);
      s.V = potential_value(potential, x[i]);
      s.S = std::arg(jet.psi) * kHbar;
      s.logJ = 0.0;
      s.E = 0.5 * sys.mass * s.v * s.v + s.V + s.Q;
      f.elements.push_back(s);
    }
    run.record.push(std::move(f));
  };

  const auto steps_per_out = static_cast<long>(std::llround(opt.dt_out / opt.dt_int));
  if (steps_per_out < 1 || std::abs(steps_per_out * opt.dt_int - opt.dt_out) > 1e-9 * opt.dt_out)
    throw ConfigError("dt_out must be a multiple of dt_int");
  const auto n_out = static_cast<long>(std::floor(opt.t_end / opt.dt_out + 1e-9));

  double t = 0.0;
  record(t);
  std::vector<double> tmp(n);
  for (long o = 1; o <= n_out; ++o) {
    for (long s = 0; s < steps_per_out; ++s) {
      const double h = opt.dt_int;
      const auto k1 = velocities(t, x);
      last_v = k1;
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
      const auto k2 = velocities(t + 0.5 * h, tmp);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
      const auto k3 = velocities(t + 0.5 * h, tmp);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
      const auto k4 = velocities(t + h, tmp);
      for (std::size_t i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      t = static_cast<double>((o - 1) * steps_per_out + s + 1) * h;
    }
    record(t);
  }
  return run;
}

}  // namespace qtraj::dvr

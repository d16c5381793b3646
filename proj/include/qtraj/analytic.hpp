#pragma once

// Closed-form reference results: the coherent state in a harmonic well and
// the two-state picture of tunnelling in a symmetric double well.

#include <cmath>
#include <numbers>

#include "qtraj/core.hpp"

namespace qtraj::analytic {

/// Gaussian with beta = m omega / hbar oscillating rigidly about x = 0.
struct CoherentModel {
  double m = 1.0;
  double omega = 1.0;
  double x0 = 0.0;  // initial centroid

  double beta() const { return m * omega / kHbar; }
};

/// exp(-m omega (x - x0 cos(omega t))^2), unnormalised.
inline double coherent_density(const CoherentModel& c, double x, double t) {
  const double d = x - c.x0 * std::cos(c.omega * t);
  return std::exp(-c.beta() * d * d);
}

inline double coherent_centroid(const CoherentModel& c, double t) { return c.x0 * std::cos(c.omega * t); }

/// x(t) = x(0) + x0 (cos(omega t) - 1).
inline double coherent_trajectory(const CoherentModel& c, double x_start, double t) {
  return x_start + c.x0 * (std::cos(c.omega * t) - 1.0);
}

/// m dx/dt = -m omega x0 sin(omega t), the same for every trajectory.
inline double coherent_velocity(const CoherentModel& c, double t) {
  return -c.omega * c.x0 * std::sin(c.omega * t);
}

struct ActionEnergy {
  double S = 0.0;
  double E = 0.0;
};

/// Phase of the coherent state and the energy carried along a trajectory,
///   S = -hbar omega t / 2 - (m omega / 2)(2 x x0 sin wt - x0^2 sin 2wt / 2),
///   E = -dS/dt = hbar omega / 2 + (m omega^2 / 2)(2 x x0 cos wt - x0^2 cos 2wt),
/// with the sign convention psi ~ exp(+iS/hbar), so that E = 1/2 m v^2 + V + Q
/// and dS/dt along a trajectory equals the quantum Lagrangian.
inline ActionEnergy coherent_action_energy(const CoherentModel& c, double x, double t) {
  const double w = c.omega;
  const double wt = w * t;
  ActionEnergy r;
  r.S = -0.5 * kHbar * wt -
        0.5 * c.m * w * (2.0 * x * c.x0 * std::sin(wt) - 0.5 * c.x0 * c.x0 * std::sin(2.0 * wt));
  r.E = 0.5 * kHbar * w + 0.5 * c.m * w * w * (2.0 * x * c.x0 * std::cos(wt) - c.x0 * c.x0 * std::cos(2.0 * wt));
  return r;
}

/// Q(x, t) for the coherent state: hbar omega / 2 - (m omega^2 / 2)(x - x_c(t))^2.
inline double coherent_quantum_potential(const CoherentModel& c, double x, double t) {
  const double d = x - coherent_centroid(c, t);
  return 0.5 * kHbar * c.omega - 0.5 * c.m * c.omega * c.omega * d * d;
}

/// Q(x) = (hbar^2 beta / 2m)(1 - beta (x - x0)^2) for rho = exp(-beta (x - x0)^2).
inline double gaussian_quantum_potential(double beta, double m, double x0, double x) {
  const double d = x - x0;
  return kHbar * kHbar * beta / (2.0 * m) * (1.0 - beta * d * d);
}

// ---------------------------------------------------------------------------
// Double well V = a x^4 - b x^2

inline double well_minimum(const DoubleWell& w) { return std::sqrt(w.b / (2.0 * w.a)); }

/// Barrier height above the well bottoms, b^2 / 4a.
inline double barrier_height(const DoubleWell& w) { return w.b * w.b / (4.0 * w.a); }

/// Harmonic frequency at the minima: V''(x0) = 4b.
inline double well_frequency(const DoubleWell& w, double m) { return std::sqrt(4.0 * w.b / m); }

/// Width parameter of the harmonic ground state in one well, m omega0 = sqrt(4 b m).
inline double well_beta(const DoubleWell& w, double m) { return std::sqrt(4.0 * w.b * m); }

struct TwoStateModel {
  double m = 1.0;
  double omega0 = 1.0;       // harmonic frequency of each well
  double omega_split = 0.0;  // hbar omega_split = (E_minus - E_plus) / 2
  double x0 = 0.0;           // distance of each minimum from the barrier
};

inline TwoStateModel make_two_state(const DoubleWell& w, double m, double e_plus, double e_minus) {
  return {m, well_frequency(w, m), 0.5 * (e_minus - e_plus) / kHbar, well_minimum(w)};
}

/// Quantum potential at the barrier top for the two-state wavepacket,
///   Q(0, t) = hbar omega0 / 2 + (m omega0^2 x0^2 / 4)(cos(4 omega_split t) - 3).
/// Highest (-m w0^2 x0^2 / 2) while localised, lowest (-m w0^2 x0^2) at the 50:50 mixture.
inline double two_state_Q_barrier(const TwoStateModel& s, double t) {
  return 0.5 * kHbar * s.omega0 +
         0.25 * s.m * s.omega0 * s.omega0 * s.x0 * s.x0 * (std::cos(4.0 * s.omega_split * t) - 3.0);
}

/// Population of the starting well: the two-state packet is
/// cos(wt) phi_R - i sin(wt) phi_L.
inline double two_state_right_population(const TwoStateModel& s, double t) {
  const double c = std::cos(s.omega_split * t);
  return c * c;
}

enum class WellSide { Left, Right };

/// Q(x) ~ hbar omega0 / 2 - (m omega0^2 / 2)(x -+ x0)^2 near one well centre.
inline double two_state_Q_parabola(const TwoStateModel& s, double x, WellSide side) {
  const double centre = side == WellSide::Right ? s.x0 : -s.x0;
  const double d = x - centre;
  return 0.5 * kHbar * s.omega0 - 0.5 * s.m * s.omega0 * s.omega0 * d * d;
}

inline double effective_barrier(double q0, double vb) { return q0 + vb; }

inline double coherent_period_to_omega(double period) { return 2.0 * std::numbers::pi / period; }

}  // namespace qtraj::analytic

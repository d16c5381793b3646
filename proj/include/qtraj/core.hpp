#pragma once

// Domain types shared by every engine: the physical system, analytic
// potentials, Lagrangian fluid elements and the ensemble that carries them.

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace qtraj {

/// Atomic units throughout: hbar = 1, lengths in Bohr, energies in hartree.
inline constexpr double kHbar = 1.0;

/// Hartree to wavenumber conversion (cm^-1 per hartree).
inline constexpr double kHartreeToWavenumber = 219474.6313632;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a stencil cannot support the requested polynomial fit,
/// which in practice means trajectories have clustered together.
class DegenerateGeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the adaptive step controller would need dt below dt_min.
class StiffnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PhysicalSystem {
  double mass = 1.0;
  static constexpr double hbar = kHbar;

  explicit PhysicalSystem(double m = 1.0) : mass(m) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("mass must be positive");
  }
};

// ---------------------------------------------------------------------------
// Potentials

/// V(x) = 1/2 m omega^2 (x - center)^2. The mass is stored with the well so
/// that the potential is a function of x alone.
struct Harmonic {
  double omega = 1.0;
  double center = 0.0;
  double mass = 1.0;
};

/// V(x) = a x^4 - b x^2.
struct DoubleWell {
  double a = 0.0;
  double b = 0.0;
};

/// V(x) = sum_k c_k x^k.
struct PolynomialCoeffs {
  std::vector<double> coeffs;
};

struct ZeroPotential {};

using PotentialModel = std::variant<Harmonic, DoubleWell, PolynomialCoeffs, ZeroPotential>;

inline void validate(const PotentialModel& p) {
  if (const auto* h = std::get_if<Harmonic>(&p)) {
    if (!(h->omega > 0.0)) throw ConfigError("harmonic omega must be positive");
    if (!(h->mass > 0.0)) throw ConfigError("harmonic mass must be positive");
  } else if (const auto* d = std::get_if<DoubleWell>(&p)) {
    if (!(d->a > 0.0)) throw ConfigError("double-well a must be positive");
  }
}

inline double potential_value(const PotentialModel& p, double x) {
  return std::visit(
      [x](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Harmonic>) {
          const double d = x - v.center;
          return 0.5 * v.mass * v.omega * v.omega * d * d;
        } else if constexpr (std::is_same_v<T, DoubleWell>) {
          const double x2 = x * x;
          return v.a * x2 * x2 - v.b * x2;
        } else if constexpr (std::is_same_v<T, PolynomialCoeffs>) {
          double acc = 0.0;
          for (auto it = v.coeffs.rbegin(); it != v.coeffs.rend(); ++it) acc = acc * x + *it;
          return acc;
        } else {
          return 0.0;
        }
      },
      p);
}

inline double potential_gradient(const PotentialModel& p, double x) {
  return std::visit(
      [x](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Harmonic>) {
          return v.mass * v.omega * v.omega * (x - v.center);
        } else if constexpr (std::is_same_v<T, DoubleWell>) {
          return 4.0 * v.a * x * x * x - 2.0 * v.b * x;
        } else if constexpr (std::is_same_v<T, PolynomialCoeffs>) {
          double acc = 0.0;
          for (std::size_t k = v.coeffs.size(); k-- > 1;) acc = acc * x + static_cast<double>(k) * v.coeffs[k];
          return acc;
        } else {
          return 0.0;
        }
      },
      p);
}

// ---------------------------------------------------------------------------
// Fluid elements

/// One Lagrangian particle. The density is carried as g = log(rho); the
/// volume element at time t is dx0 * exp(logJ).
struct FluidElement {
  double x = 0.0;
  double v = 0.0;
  double g = 0.0;
  double S = 0.0;
  double logJ = 0.0;
  double dx0 = 0.0;

  double rho() const { return std::exp(g); }
  double volume() const { return dx0 * std::exp(logJ); }
};

struct Ensemble {
  PhysicalSystem system;
  PotentialModel potential = ZeroPotential{};
  std::vector<FluidElement> elements;
  double t = 0.0;

  std::size_t size() const { return elements.size(); }

  std::vector<double> positions() const {
    std::vector<double> out(elements.size());
    for (std::size_t i = 0; i < elements.size(); ++i) out[i] = elements[i].x;
    return out;
  }
};

/// Smallest gap between neighbours; negative or zero when the ordering is broken.
inline double min_spacing(const Ensemble& e) {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < e.elements.size(); ++i)
    gap = std::min(gap, e.elements[i].x - e.elements[i - 1].x);
  return gap;
}

inline bool strictly_ordered(const Ensemble& e) { return min_spacing(e) > 0.0; }

/// Evenly spaced Gaussian ensemble, rho = exp(-beta (x - x0)^2), renormalised
/// so that sum rho_i dx_i = 1 on the discrete set.
inline Ensemble init_gaussian_ensemble(const PhysicalSystem& system, const PotentialModel& potential,
                                       double x0, double beta, std::size_t n, double span) {
  if (n < 2) throw ConfigError("ensemble needs at least two elements");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(span > 0.0)) throw ConfigError("span must be positive");
  validate(potential);

  Ensemble e{system, potential, {}, 0.0};
  e.elements.resize(n);
  const double dx = span / static_cast<double>(n - 1);
  const double left = x0 - 0.5 * span;
  for (std::size_t i = 0; i < n; ++i) {
    auto& el = e.elements[i];
    el.x = left + dx * static_cast<double>(i);
    const double d = el.x - x0;
    el.g = -beta * d * d;
    el.dx0 = dx;
  }
  // log-sum-exp keeps wide ensembles from underflowing.
  double gmax = -std::numeric_limits<double>::infinity();
  for (const auto& el : e.elements) gmax = std::max(gmax, el.g);
  double sum = 0.0;
  for (const auto& el : e.elements) sum += std::exp(el.g - gmax) * el.dx0;
  // Subtract gmax first so the largest exponents cancel exactly.
  const double log_sum = std::log(sum);
  for (auto& el : e.elements) el.g = (el.g - gmax) - log_sum;
  return e;
}

/// Default span of the initial ensemble: +-3 widths of exp(-beta x^2).
inline double default_span(double beta) { return 6.0 / std::sqrt(beta); }

inline Ensemble init_gaussian_ensemble(const PhysicalSystem& system, const PotentialModel& potential,
                                       double x0, double beta, std::size_t n) {
  return init_gaussian_ensemble(system, potential, x0, beta, n, default_span(beta));
}

}  // namespace qtraj

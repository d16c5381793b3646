#pragma once

// Moving weighted least squares on a scattered 1-D point cloud.
//
// Around each centre x0 the field is modelled as
//   f(x) - f(x0) = sum_k a_k p_k(x - x0),  k = 1..order,
// so the fit passes through the centre value. The weighted overdetermined
// system is solved through a truncated SVD pseudo-inverse; because the design
// matrix depends only on the geometry, one LocalFit can be reused for every
// field sampled on the same cloud.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qtraj/core.hpp"

namespace qtraj::mwls {

enum class BasisFamily { Monomial, Hermite };

struct BasisSpec {
  int order = 4;
  BasisFamily family = BasisFamily::Hermite;
};

inline void validate(const BasisSpec& b) {
  if (b.order < 2) throw ConfigError("basis order must be at least 2");
}

inline std::string to_string(BasisFamily f) { return f == BasisFamily::Monomial ? "monomial" : "hermite"; }

inline BasisFamily basis_family_from_string(const std::string& s) {
  if (s == "monomial") return BasisFamily::Monomial;
  if (s == "hermite") return BasisFamily::Hermite;
  throw ConfigError("unknown basis family '" + s + "'");
}

struct Stencil {
  std::size_t center_index = 0;
  std::vector<std::size_t> neighbor_indices;  // ascending
  std::vector<double> offsets;                // x_j - x_center, aligned with neighbor_indices
};

/// Derivative jet of the fitted field at the stencil centre.
/// derivatives[k-1] holds the k-th derivative.
struct FitResult {
  std::vector<double> derivatives;
  double chi2 = 0.0;
  double condition = 0.0;
  int rank = 0;

  double derivative(int k) const { return derivatives.at(static_cast<std::size_t>(k - 1)); }
  int order() const { return static_cast<int>(derivatives.size()); }
};

/// The n_neighbors points nearest to positions[i] (i excluded). Positions must
/// be sorted ascending. Equidistant candidates resolve to the lower index.
inline Stencil select_stencil(std::span<const double> positions, std::size_t i, std::size_t n_neighbors) {
  const std::size_t n = positions.size();
  if (i >= n) throw std::out_of_range("stencil centre out of range");
  if (n_neighbors == 0 || n_neighbors + 1 > n)
    throw DegenerateGeometryError("ensemble of " + std::to_string(n) + " too small for a stencil of " +
                                  std::to_string(n_neighbors) + " neighbours");
  Stencil s;
  s.center_index = i;
  s.neighbor_indices.reserve(n_neighbors);
  const double x0 = positions[i];
  std::size_t left = i;       // next left candidate is left - 1
  std::size_t right = i + 1;  // next right candidate
  while (s.neighbor_indices.size() < n_neighbors) {
    const bool has_left = left > 0;
    const bool has_right = right < n;
    bool take_left;
    if (has_left && has_right) {
      take_left = std::abs(positions[left - 1] - x0) <= std::abs(positions[right] - x0);
    } else {
      take_left = has_left;
    }
    if (take_left) {
      s.neighbor_indices.push_back(--left);
    } else {
      s.neighbor_indices.push_back(right++);
    }
  }
  std::sort(s.neighbor_indices.begin(), s.neighbor_indices.end());
  s.offsets.reserve(n_neighbors);
  for (auto j : s.neighbor_indices) s.offsets.push_back(positions[j] - x0);
  return s;
}

inline Stencil select_stencil(const Ensemble& e, std::size_t i, std::size_t n_neighbors) {
  const auto x = e.positions();
  return select_stencil(std::span<const double>(x), i, n_neighbors);
}

/// Gaussian weights normalised so the farthest offset gets weight 0.01.
inline std::vector<double> gaussian_weights(std::span<const double> offsets) {
  if (offsets.empty()) throw std::invalid_argument("gaussian_weights: no offsets");
  double rmax = 0.0;
  for (double o : offsets) rmax = std::max(rmax, std::abs(o));
  if (!(rmax > 0.0)) throw DegenerateGeometryError("gaussian_weights: all offsets are zero");
  const double alpha = std::log(100.0) / (rmax * rmax);
  std::vector<double> w(offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j) w[j] = std::exp(-alpha * offsets[j] * offsets[j]);
  return w;
}

namespace detail {

// Physicists' Hermite polynomials H_0..H_n at s.
inline std::vector<double> hermite_values(int n, double s) {
  std::vector<double> h(static_cast<std::size_t>(n) + 1);
  h[0] = 1.0;
  if (n >= 1) h[1] = 2.0 * s;
  for (int k = 1; k < n; ++k) h[k + 1] = 2.0 * s * h[k] - 2.0 * k * h[k - 1];
  return h;
}

inline double falling_factorial(int n, int k) {
  double r = 1.0;
  for (int j = 0; j < k; ++j) r *= n - j;
  return r;
}

/// x^k / k!
struct MonomialBasis {
  static double column(int k, double offset, double /*scale*/) {
    double r = 1.0;
    for (int j = 1; j <= k; ++j) r *= offset / j;
    return r;
  }
  static Eigen::MatrixXd to_derivatives(int order, double /*scale*/) {
    return Eigen::MatrixXd::Identity(order, order);
  }
};

/// Stretch of the Hermite argument: with s = sqrt(2 ln 100) r / r_max the
/// squared fit weights equal exp(-s^2), the Hermite orthogonality weight.
inline const double kHermiteStretch = std::sqrt(2.0 * std::log(100.0));

/// H_k(s) - H_k(0), s = kHermiteStretch * offset / scale. Subtracting H_k(0)
/// keeps the model pinned to the centre value; the span equals that of the
/// monomials.
struct HermiteBasis {
  static double column(int k, double offset, double scale) {
    const auto h = hermite_values(k, kHermiteStretch * offset / scale);
    const auto h0 = hermite_values(k, 0.0);
    return h[k] - h0[k];
  }
  // d^m/dx^m H_k(x/h) at 0 = 2^m k!/(k-m)! H_{k-m}(0) / h^m
  static Eigen::MatrixXd to_derivatives(int order, double scale) {
    const auto h0 = hermite_values(order, 0.0);
    const double h = scale / kHermiteStretch;
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(order, order);
    for (int m = 1; m <= order; ++m) {
      const double factor = std::pow(2.0 / h, m);
      for (int k = m; k <= order; ++k) c(m - 1, k - 1) = factor * falling_factorial(k, m) * h0[k - m];
    }
    return c;
  }
};

template <class Basis>
Eigen::MatrixXd design_matrix(std::span<const double> offsets, int order, double scale) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(offsets.size()), order);
  for (std::size_t j = 0; j < offsets.size(); ++j)
    for (int k = 1; k <= order; ++k) p(static_cast<Eigen::Index>(j), k - 1) = Basis::column(k, offsets[j], scale);
  return p;
}

}  // namespace detail

/// Relative singular-value cutoff of the pseudo-inverse.
inline constexpr double kSingularCutoff = 1e-10;

/// Pseudo-inverse of one stencil's weighted design matrix, reusable for any
/// field sampled on the stencil.
class LocalFit {
 public:
  LocalFit(const Stencil& stencil, const BasisSpec& basis, double cutoff = kSingularCutoff)
      : center_index_(stencil.center_index), neighbors_(stencil.neighbor_indices), order_(basis.order) {
    validate(basis);
    const auto& offsets = stencil.offsets;
    if (offsets.size() < static_cast<std::size_t>(order_))
      throw DegenerateGeometryError("stencil has fewer points than basis functions");
    const auto w = gaussian_weights(offsets);
    double scale = 0.0;
    for (double o : offsets) scale = std::max(scale, std::abs(o));

    Eigen::MatrixXd design;
    if (basis.family == BasisFamily::Hermite) {
      design = detail::design_matrix<detail::HermiteBasis>(offsets, order_, scale);
      to_derivs_ = detail::HermiteBasis::to_derivatives(order_, scale);
    } else {
      design = detail::design_matrix<detail::MonomialBasis>(offsets, order_, scale);
      to_derivs_ = detail::MonomialBasis::to_derivatives(order_, scale);
    }
    weights_ = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    weighted_design_ = weights_.asDiagonal() * design;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(weighted_design_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv(0) : 0.0;
    const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
    condition_ = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    rank_ = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
      if (sv(k) > cutoff * smax) {
        inv(k) = 1.0 / sv(k);
        ++rank_;
      }
    }
    if (rank_ < order_)
      throw DegenerateGeometryError("stencil around element " + std::to_string(center_index_) + " has rank " +
                                    std::to_string(rank_) + " < " + std::to_string(order_) +
                                    " (trajectory clustering)");
    pinv_ = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  }

  /// Fit from values at the neighbours (aligned with the stencil) and the centre value.
  FitResult fit(std::span<const double> neighbor_values, double center_value) const {
    const auto n = static_cast<Eigen::Index>(neighbors_.size());
    if (static_cast<Eigen::Index>(neighbor_values.size()) != n)
      throw std::invalid_argument("fit: value count does not match stencil");
    Eigen::VectorXd rhs(n);
    for (Eigen::Index j = 0; j < n; ++j) rhs(j) = weights_(j) * (neighbor_values[static_cast<std::size_t>(j)] - center_value);
    return finish(rhs);
  }

  /// Fit a field given over the whole cloud (indexed like the ensemble).
  FitResult fit_field(std::span<const double> field) const {
    const auto n = static_cast<Eigen::Index>(neighbors_.size());
    const double c = field[center_index_];
    Eigen::VectorXd rhs(n);
    for (Eigen::Index j = 0; j < n; ++j) rhs(j) = weights_(j) * (field[neighbors_[static_cast<std::size_t>(j)]] - c);
    return finish(rhs);
  }

  int rank() const { return rank_; }
  double condition() const { return condition_; }
  std::size_t center_index() const { return center_index_; }

 private:
  FitResult finish(const Eigen::VectorXd& rhs) const {
    const Eigen::VectorXd a = pinv_ * rhs;
    const Eigen::VectorXd d = to_derivs_ * a;
    FitResult r;
    r.derivatives.assign(d.data(), d.data() + d.size());
    r.chi2 = (rhs - weighted_design_ * a).squaredNorm();
    r.condition = condition_;
    r.rank = rank_;
    return r;
  }

  std::size_t center_index_;
  std::vector<std::size_t> neighbors_;
  int order_;
  int rank_ = 0;
  double condition_ = 0.0;
  Eigen::VectorXd weights_;
  Eigen::MatrixXd weighted_design_;
  Eigen::MatrixXd pinv_;
  Eigen::MatrixXd to_derivs_;
};

inline FitResult fit_local_polynomial(std::span<const double> neighbor_values, double center_value,
                                      const Stencil& stencil, const BasisSpec& basis) {
  return LocalFit(stencil, basis).fit(neighbor_values, center_value);
}

/// Re-expand a jet about x0 + shift. Exact for the fitted polynomial; used to
/// extrapolate to points that no element occupies.
inline FitResult shift_jet(const FitResult& jet, double shift) {
  const int n = jet.order();
  FitResult out = jet;
  for (int m = 1; m <= n; ++m) {
    double acc = 0.0;
    double term = 1.0;  // shift^(k-m)/(k-m)!
    for (int k = m; k <= n; ++k) {
      acc += jet.derivative(k) * term;
      term *= shift / (k - m + 1);
    }
    out.derivatives[static_cast<std::size_t>(m - 1)] = acc;
  }
  return out;
}

/// Change of the fitted field between x0 and x0 + shift.
inline double jet_increment(const FitResult& jet, double shift) {
  double acc = 0.0;
  double term = 1.0;
  for (int k = 1; k <= jet.order(); ++k) {
    term *= shift / k;
    acc += jet.derivative(k) * term;
  }
  return acc;
}

/// Q = -(hbar^2 / 4m) (g'' + g'^2 / 2) for g = log(rho).
inline double quantum_potential(const FitResult& g_jet, const PhysicalSystem& system) {
  const double g1 = g_jet.derivative(1);
  const double g2 = g_jet.derivative(2);
  return -(system.hbar * system.hbar / (4.0 * system.mass)) * (g2 + 0.5 * g1 * g1);
}

/// -dQ/dx = (hbar^2 / 4m) (g''' + g' g'').
inline double quantum_force(const FitResult& g_jet, const PhysicalSystem& system) {
  if (g_jet.order() < 3) throw ConfigError("quantum force needs a jet of order >= 3");
  const double g1 = g_jet.derivative(1);
  const double g2 = g_jet.derivative(2);
  const double g3 = g_jet.derivative(3);
  return (system.hbar * system.hbar / (4.0 * system.mass)) * (g3 + g1 * g2);
}

inline double velocity_divergence(const FitResult& v_jet) { return v_jet.derivative(1); }

/// One LocalFit per element of a sorted cloud.
class CloudFit {
 public:
  CloudFit(std::span<const double> positions, const BasisSpec& basis, std::size_t n_neighbors) {
    fits_.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i)
      fits_.emplace_back(select_stencil(positions, i, n_neighbors), basis);
  }

  std::size_t size() const { return fits_.size(); }
  const LocalFit& operator[](std::size_t i) const { return fits_[i]; }

  std::vector<FitResult> fit_all(std::span<const double> field) const {
    std::vector<FitResult> out;
    out.reserve(fits_.size());
    for (const auto& f : fits_) out.push_back(f.fit_field(field));
    return out;
  }

 private:
  std::vector<LocalFit> fits_;
};

/// Replace each value by the centre value of an unpinned weighted fit
/// c + sum_k a_k s^k (k = 1..order, s = offset / r_max) over the n_neighbors
/// nearest points. Polynomials of degree <= order pass through unchanged;
/// grid-scale oscillations are damped.
inline std::vector<double> smooth_field(std::span<const double> positions, std::span<const double> field, int order,
                                        std::size_t n_neighbors) {
  if (order < 0) throw ConfigError("smoothing order must be non-negative");
  if (n_neighbors < static_cast<std::size_t>(order) + 1)
    throw ConfigError("smoothing needs at least order + 1 neighbours");
  if (field.size() != positions.size()) throw std::invalid_argument("smooth_field: size mismatch");
  std::vector<double> out(field.size());
  const auto cols = static_cast<Eigen::Index>(order) + 1;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto s = select_stencil(positions, i, n_neighbors);
    const auto w = gaussian_weights(s.offsets);
    double scale = 0.0;
    for (double o : s.offsets) scale = std::max(scale, std::abs(o));
    const auto rows = static_cast<Eigen::Index>(s.offsets.size()) + 1;
    Eigen::MatrixXd p(rows, cols);
    Eigen::VectorXd rhs(rows);
    for (Eigen::Index j = 0; j < rows; ++j) {
      const bool centre = j + 1 == rows;
      const double o = centre ? 0.0 : s.offsets[static_cast<std::size_t>(j)] / scale;
      const double wj = centre ? 1.0 : w[static_cast<std::size_t>(j)];
      double pk = 1.0;
      for (Eigen::Index k = 0; k < cols; ++k) {
        p(j, k) = wj * pk;
        pk *= o;
      }
      rhs(j) = wj * field[centre ? i : s.neighbor_indices[static_cast<std::size_t>(j)]];
    }
    out[i] = p.colPivHouseholderQr().solve(rhs)(0);
  }
  return out;
}

/// Default stencil size for a basis: twice overdetermined.
inline std::size_t default_neighbors(const BasisSpec& b) { return static_cast<std::size_t>(2 * b.order + 2); }

}  // namespace qtraj::mwls

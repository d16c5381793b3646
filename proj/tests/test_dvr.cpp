#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "qtraj/analytic.hpp"
#include "qtraj/core.hpp"
#include "qtraj/dvr.hpp"

namespace {

using namespace qtraj;
using namespace qtraj::dvr;

constexpr double kPi = std::numbers::pi;

TEST(Transform, SmallExamples) {
  const auto u1 = build_transform(1);
  EXPECT_DOUBLE_EQ(u1(0, 0), 1.0);
  const auto u3 = build_transform(3);
  EXPECT_NEAR(u3(0, 1), 0.70710678, 1e-8);
  EXPECT_NEAR(u3(1, 1), 0.0, 1e-15);
  EXPECT_NEAR(u3(0, 0), 0.5, 1e-15);
  EXPECT_THROW(build_transform(0), ConfigError);
}

TEST(Transform, SymmetricInvolution) {
  for (std::size_t n : {2u, 7u, 64u, 1024u}) {
    const auto u = build_transform(n);
    const auto id = Eigen::MatrixXd::Identity(u.rows(), u.cols());
    EXPECT_LT((u - u.transpose()).cwiseAbs().maxCoeff(), 1e-14) << n;
    EXPECT_LT((u * u - id).cwiseAbs().maxCoeff(), 1e-12) << n;
  }
}

TEST(Grid, PointsAndValidation) {
  const auto g = make_grid(4, -1.0, 1.0);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.4);
  EXPECT_NEAR(g.points.front(), -0.6, 1e-15);
  EXPECT_NEAR(g.points.back(), 0.6, 1e-15);
  EXPECT_THROW(make_grid(0, -1.0, 1.0), ConfigError);
  EXPECT_THROW(make_grid(4, 1.0, 1.0), ConfigError);
}

TEST(Spectrum, ParticleInBox) {
  const double m = 1.5, L = 3.0;
  const auto g = make_grid(60, 0.0, L);
  const auto d = eigensolve(build_hamiltonian(g, ZeroPotential{}, PhysicalSystem(m)));
  for (int n = 1; n <= 60; ++n) {
    const double exact = std::pow(n * kPi / L, 2) / (2.0 * m);
    EXPECT_NEAR(d.eigenvalues(n - 1), exact, 1e-10 * exact) << n;
  }
}

TEST(Spectrum, HarmonicLevels) {
  const double m = 1.0, w = 1.0;
  const auto g = make_grid(200, -10.0, 10.0);
  const auto d = eigensolve(build_hamiltonian(g, Harmonic{w, 0.0, m}, PhysicalSystem(m)));
  for (int n = 0; n < 10; ++n) EXPECT_NEAR(d.eigenvalues(n), (n + 0.5) * w, 1e-9) << n;
}

TEST(Spectrum, EigensolveSmallMatrices) {
  Eigen::MatrixXd diag = Eigen::Vector3d(3.0, -1.0, 2.0).asDiagonal();
  const auto a = eigensolve(diag);
  EXPECT_DOUBLE_EQ(a.eigenvalues(0), -1.0);
  EXPECT_DOUBLE_EQ(a.eigenvalues(2), 3.0);
  Eigen::MatrixXd two(2, 2);
  two << 2.0, 1.0, 1.0, 2.0;
  const auto b = eigensolve(two);
  EXPECT_NEAR(b.eigenvalues(0), 1.0, 1e-14);
  EXPECT_NEAR(b.eigenvalues(1), 3.0, 1e-14);
  EXPECT_NEAR(std::abs(b.eigenvectors(0, 0)), std::sqrt(0.5), 1e-14);
}

// Double-well doublet converges between N = 100 and N = 200 on the default box.
TEST(Spectrum, DoubleWellGridConvergence) {
  const DoubleWell w{0.007, 0.01};
  const PhysicalSystem sys(2000.0);
  const auto coarse = eigensolve(build_hamiltonian(make_grid(100, -2.5, 2.5), w, sys));
  const auto fine = eigensolve(build_hamiltonian(make_grid(200, -2.5, 2.5), w, sys));
  for (int n = 0; n < 4; ++n) EXPECT_NEAR(coarse.eigenvalues(n), fine.eigenvalues(n), 1e-9) << n;
  EXPECT_LT(fine.eigenvalues(0), fine.eigenvalues(1));
}

class Propagation : public ::testing::Test {
 protected:
  PhysicalSystem sys{1.0};
  DvrGrid g = make_grid(128, -10.0, 10.0);
  SpectralDecomposition d = eigensolve(build_hamiltonian(g, Harmonic{1.0, 0.0, 1.0}, sys));
};

TEST_F(Propagation, EigenstateIsStationary) {
  const auto s0 = state_from_coefficients(g, d.eigenvectors.col(2).cast<cplx>(), 0.0);
  const auto s1 = propagate(s0, d, 3.7);
  const cplx phase = std::polar(1.0, -d.eigenvalues(2) * 3.7);
  EXPECT_LT((s1.psi - phase * s0.psi).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_DOUBLE_EQ(s1.t, 3.7);
}

TEST_F(Propagation, ReversibleAndUnitary) {
  const auto s0 = gaussian_state(g, 2.0, 1.0);
  EXPECT_NEAR(s0.norm(), 1.0, 1e-14);
  auto s = s0;
  for (int k = 0; k < 10; ++k) s = propagate(s, d, 0.9);
  EXPECT_NEAR(s.norm(), 1.0, 1e-12);
  for (int k = 0; k < 10; ++k) s = propagate(s, d, -0.9);
  EXPECT_LT((s.psi - s0.psi).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_F(Propagation, SpectralPropagatorMatchesSteps) {
  const auto s0 = gaussian_state(g, 2.0, 1.0);
  const SpectralPropagator prop(s0, d);
  auto s = s0;
  for (int k = 0; k < 5; ++k) s = propagate(s, d, 0.5);
  EXPECT_LT((prop.state(2.5).psi - s.psi).cwiseAbs().maxCoeff(), 1e-12);
}

// A displaced ground state oscillates rigidly: its centroid follows x0 cos t.
TEST_F(Propagation, CoherentCentroid) {
  const SpectralPropagator prop(gaussian_state(g, 2.0, 1.0), d);
  for (double t : {0.5, 1.3, 3.0}) {
    const auto s = prop.state(t);
    double mean = 0.0;
    for (std::size_t j = 0; j < g.n_points; ++j)
      mean += g.points[j] * std::norm(s.psi(static_cast<Eigen::Index>(j))) * g.spacing();
    EXPECT_NEAR(mean, 2.0 * std::cos(t), 1e-10) << t;
  }
}

TEST(Interpolation, ReproducesGridValues) {
  const auto g = make_grid(50, -3.0, 3.0);
  auto s = gaussian_state(g, 0.4, 2.0);
  for (std::size_t j = 0; j < g.n_points; ++j) s.psi(static_cast<Eigen::Index>(j)) *= std::polar(1.0, 0.3 * g.points[j]);
  const auto wf = FbrWavefunction::from_state(s);
  for (std::size_t j = 0; j < g.n_points; ++j)
    EXPECT_LT(std::abs(wf.evaluate(g.points[j]).psi - s.psi(static_cast<Eigen::Index>(j))), 1e-12) << j;
}

TEST(Interpolation, SingleModeIsExactBetweenPoints) {
  const double L = 2.0;
  const auto g = make_grid(20, 0.0, L);
  const double k = 3.0 * kPi / L;
  DvrState s{g, Eigen::VectorXcd(20), 0.0};
  for (std::size_t j = 0; j < 20; ++j) s.psi(static_cast<Eigen::Index>(j)) = std::sin(k * g.points[j]);
  for (double x : {0.013, 0.37, 1.234, 1.99}) {
    const auto jet = interpolate_psi(s, x);
    EXPECT_NEAR(jet.psi.real(), std::sin(k * x), 1e-12);
    EXPECT_NEAR(jet.dpsi.real(), k * std::cos(k * x), 1e-11);
    EXPECT_NEAR(jet.d2psi.real(), -k * k * std::sin(k * x), 1e-10);
  }
}

TEST(Interpolation, VanishesAtEdgesAndRejectsOutside) {
  const auto g = make_grid(40, -2.0, 2.0);
  const auto s = gaussian_state(g, 0.0, 1.0);
  EXPECT_LT(std::abs(interpolate_psi(s, -2.0 + 1e-9).psi), 1e-8);
  EXPECT_LT(std::abs(interpolate_psi(s, 2.0 - 1e-9).psi), 1e-8);
  EXPECT_THROW(interpolate_psi(s, 2.0), std::out_of_range);
  EXPECT_THROW(interpolate_psi(s, -2.5), std::out_of_range);
}

TEST(Pilot, VelocityOfRealAndPlaneWaves) {
  EXPECT_DOUBLE_EQ(pilot_velocity(PsiJet{0.7, -0.2, 0.1}, 2.0, 0.0).v, 0.0);
  const double k = 1.7, m = 3.0, x = 0.4;
  const cplx psi = std::polar(1.0, k * x);
  const auto pv = pilot_velocity(PsiJet{psi, cplx(0.0, k) * psi, -k * k * psi}, m, 0.0);
  EXPECT_NEAR(pv.v, k / m, 1e-15);
  EXPECT_FALSE(pv.below_floor);
  const auto low = pilot_velocity(PsiJet{1e-9, 0.0, 0.0}, m, 1e-12, 0.25);
  EXPECT_TRUE(low.below_floor);
  EXPECT_DOUBLE_EQ(low.v, 0.25);
}

// Gaussian with momentum p0: v = p0 / m everywhere and Q matches the closed form.
TEST(Pilot, MovingGaussian) {
  const double m = 2.0, beta = 1.5, p0 = 0.8, x0 = 0.3;
  const auto g = make_grid(120, -8.0, 8.0);
  auto s = gaussian_state(g, x0, beta);
  for (std::size_t j = 0; j < g.n_points; ++j) s.psi(static_cast<Eigen::Index>(j)) *= std::polar(1.0, p0 * g.points[j]);
  for (double x : {-1.0, 0.3, 1.1}) {
    EXPECT_NEAR(pilot_velocity(s, PhysicalSystem(m), x).v, p0 / m, 1e-9) << x;
    EXPECT_NEAR(quantum_potential(interpolate_psi(s, x), m), analytic::gaussian_quantum_potential(beta, m, x0, x),
                1e-9)
        << x;
  }
}

TEST(PilotTrajectories, EigenstateTrajectoriesStayPut) {
  const PhysicalSystem sys(1.0);
  const Harmonic pot{1.0, 0.0, 1.0};
  const auto g = make_grid(96, -8.0, 8.0);
  const auto d = eigensolve(build_hamiltonian(g, pot, sys));
  const SpectralPropagator prop(state_from_coefficients(g, d.eigenvectors.col(0).cast<cplx>(), 0.0), d);
  const std::vector<double> x0 = {-1.0, -0.2, 0.5, 1.3};
  const auto run = integrate_pilot_trajectories(x0, prop, pot, sys, PilotOptions{1.0, 5.0, 0.25});
  ASSERT_EQ(run.record.frames.size(), 6u);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(run.record.frames.back().elements[i].x, x0[i], 1e-10);
}

// Pilot trajectories of a coherent state follow x(0) + x0 (cos wt - 1).
TEST(PilotTrajectories, CoherentStateClosedForm) {
  const double m = 1.0, w = 1.0, x0 = 2.0;
  const PhysicalSystem sys(m);
  const Harmonic pot{w, 0.0, m};
  const auto g = make_grid(128, -10.0, 10.0);
  const SpectralPropagator prop(gaussian_state(g, x0, m * w), eigensolve(build_hamiltonian(g, pot, sys)));
  const std::vector<double> start = {0.5, 1.5, 2.0, 2.5, 3.5};
  const double t_end = 2.0 * kPi / w;
  const auto run = integrate_pilot_trajectories(start, prop, pot, sys, PilotOptions{0.05, t_end, 0.01});
  const analytic::CoherentModel model{m, w, x0};
  for (const auto& f : run.record.frames) {
    for (std::size_t i = 0; i < start.size(); ++i)
      EXPECT_NEAR(f.elements[i].x, analytic::coherent_trajectory(model, start[i], f.t), 1e-4) << f.t;
    for (std::size_t i = 1; i < start.size(); ++i) EXPECT_LT(f.elements[i - 1].x, f.elements[i].x);
  }
  EXPECT_EQ(run.floor_hits, 0u);
}

TEST(PilotTrajectories, RejectsBadInput) {
  const PhysicalSystem sys(1.0);
  const Harmonic pot{1.0, 0.0, 1.0};
  const auto g = make_grid(32, -5.0, 5.0);
  const SpectralPropagator prop(gaussian_state(g, 0.0, 1.0), eigensolve(build_hamiltonian(g, pot, sys)));
  EXPECT_THROW(integrate_pilot_trajectories({6.0}, prop, pot, sys, PilotOptions{}), std::out_of_range);
  EXPECT_THROW(integrate_pilot_trajectories({0.0}, prop, pot, sys, PilotOptions{1.0, 2.0, 0.3}), ConfigError);
}

}  // namespace

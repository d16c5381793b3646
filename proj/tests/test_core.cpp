#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qtraj/core.hpp"

namespace {

using namespace qtraj;

const DoubleWell kWell{0.007, 0.01};

TEST(Potential, DoubleWellBarrierTopIsZero) { EXPECT_EQ(potential_value(kWell, 0.0), 0.0); }

TEST(Potential, DoubleWellMinimumDepth) {
  const double xmin = std::sqrt(kWell.b / (2.0 * kWell.a));
  EXPECT_NEAR(xmin, 0.845154, 1e-6);
  EXPECT_NEAR(potential_value(kWell, xmin), -3.571429e-3, 1e-9);
  EXPECT_NEAR(potential_gradient(kWell, xmin), 0.0, 1e-15);
}

TEST(Potential, DoubleWellGradientAtOne) { EXPECT_NEAR(potential_gradient(kWell, 1.0), 0.008, 1e-15); }

TEST(Potential, HarmonicMinimum) {
  const PotentialModel h = Harmonic{0.01, 0.0, 2000.0};
  EXPECT_EQ(potential_value(h, 0.0), 0.0);
  EXPECT_NEAR(potential_value(h, 2.0), 0.5 * 2000.0 * 1e-4 * 4.0, 1e-15);
}

TEST(Potential, ZeroEverywhere) {
  for (double x : {-3.0, 0.0, 7.5}) {
    EXPECT_EQ(potential_value(ZeroPotential{}, x), 0.0);
    EXPECT_EQ(potential_gradient(ZeroPotential{}, x), 0.0);
  }
}

TEST(Potential, PolynomialHorner) {
  const PotentialModel p = PolynomialCoeffs{{1.0, -2.0, 0.5, 0.25}};
  const double x = 1.3;
  EXPECT_NEAR(potential_value(p, x), 1.0 - 2.0 * x + 0.5 * x * x + 0.25 * x * x * x, 1e-14);
  EXPECT_NEAR(potential_gradient(p, x), -2.0 + x + 0.75 * x * x, 1e-14);
}

// Gradient against a centred difference at scattered points for every variant.
TEST(Potential, GradientMatchesCentredDifference) {
  const std::vector<PotentialModel> models = {Harmonic{0.02, 0.3, 1500.0}, kWell,
                                              PolynomialCoeffs{{0.1, 0.0, -0.3, 0.05, 0.01}}, ZeroPotential{}};
  const double h = 1e-4;
  for (const auto& p : models) {
    for (int k = 0; k < 40; ++k) {
      const double x = -2.5 + 0.123457 * k;
      const double fd = (potential_value(p, x + h) - potential_value(p, x - h)) / (2.0 * h);
      const double scale = 1.0 + std::abs(potential_gradient(p, x));
      EXPECT_NEAR(potential_gradient(p, x), fd, 1e-6 * scale) << "x = " << x;
    }
  }
}

TEST(Ensemble, RejectsBadArguments) {
  const PhysicalSystem sys(2000.0);
  EXPECT_THROW(init_gaussian_ensemble(sys, ZeroPotential{}, 0.0, 0.3, 1, 1.0), ConfigError);
  EXPECT_THROW(init_gaussian_ensemble(sys, ZeroPotential{}, 0.0, 0.0, 10, 1.0), ConfigError);
  EXPECT_THROW(init_gaussian_ensemble(sys, ZeroPotential{}, 0.0, 0.3, 10, -1.0), ConfigError);
  EXPECT_THROW(PhysicalSystem(-1.0), ConfigError);
}

TEST(Ensemble, TwoElementsAtEndpoints) {
  const auto e = init_gaussian_ensemble(PhysicalSystem(1.0), ZeroPotential{}, 1.0, 2.0, 2, 4.0);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_DOUBLE_EQ(e.elements[0].x, -1.0);
  EXPECT_DOUBLE_EQ(e.elements[1].x, 3.0);
  double norm = 0.0;
  for (const auto& el : e.elements) norm += el.rho() * el.volume();
  EXPECT_NEAR(norm, 1.0, 1e-14);
}

TEST(Ensemble, HarmonicCaseInitialState) {
  const PhysicalSystem sys(2000.0);
  const auto e = init_gaussian_ensemble(sys, Harmonic{0.0070711, 0.0, 2000.0}, 3.0, 0.3, 100);
  ASSERT_EQ(e.size(), 100u);
  std::size_t peak = 0;
  std::size_t nearest = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.elements[i].g > e.elements[peak].g) peak = i;
    if (std::abs(e.elements[i].x - 3.0) < std::abs(e.elements[nearest].x - 3.0)) nearest = i;
    EXPECT_EQ(e.elements[i].v, 0.0);
    EXPECT_EQ(e.elements[i].S, 0.0);
    EXPECT_EQ(e.elements[i].logJ, 0.0);
  }
  EXPECT_EQ(std::abs(e.elements[peak].x - 3.0), std::abs(e.elements[nearest].x - 3.0));
  EXPECT_NEAR(e.elements.front().x, 3.0 - 3.0 / std::sqrt(0.3), 1e-12);
}

TEST(Ensemble, DoubleWellStartsInRightWell) {
  const double m = 2000.0;
  const double x0 = std::sqrt(kWell.b / (2.0 * kWell.a));
  const double beta = std::sqrt(4.0 * kWell.b * m);
  const auto e = init_gaussian_ensemble(PhysicalSystem(m), kWell, x0, beta, 100);
  double mean = 0.0;
  for (const auto& el : e.elements) mean += el.x * el.rho() * el.volume();
  EXPECT_NEAR(mean, x0, 1e-12);
}

// Normalisation and ordering over a sweep of parameters.
TEST(Ensemble, NormalisedAndOrderedForAnyParameters) {
  for (std::size_t n : {2u, 3u, 17u, 100u, 513u}) {
    for (double beta : {1e-3, 0.3, 8.9, 400.0}) {
      for (double span : {0.01, 1.0, 25.0}) {
        const auto e = init_gaussian_ensemble(PhysicalSystem(1836.0), ZeroPotential{}, -0.7, beta, n, span);
        double norm = 0.0;
        for (const auto& el : e.elements) norm += el.rho() * el.volume();
        EXPECT_NEAR(norm, 1.0, 1e-12) << n << " " << beta << " " << span;
        EXPECT_TRUE(strictly_ordered(e));
      }
    }
  }
}

}  // namespace

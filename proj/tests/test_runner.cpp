#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qtraj/config.hpp"
#include "qtraj/io.hpp"
#include "qtraj/runner.hpp"

namespace {

using namespace qtraj;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Short harmonic run: 30 elements, 20 a.u.
ExperimentConfig short_harmonic(const std::string& engine = "mwls") {
  auto c = preset("harmonic-A");
  c.apply_override("engine=" + engine);
  c.apply_override("initial.n_particles=30");
  c.apply_override("integration.t_end=20");
  c.apply_override("output.density_dt=10");
  return c;
}

TEST(Config, DefaultsAndParsing) {
  const auto c = ExperimentConfig::from_string("name = t\n[system]\nmass = 1234\n[initial]\nbeta = 0.5\n");
  EXPECT_EQ(c.raw("name"), "t");
  EXPECT_DOUBLE_EQ(c.number("system.mass"), 1234.0);
  EXPECT_DOUBLE_EQ(c.number("initial.beta"), 0.5);
  EXPECT_DOUBLE_EQ(c.number("integration.tol"), 1e-6);
  EXPECT_EQ(c.count("mwls.order"), 4u);
  EXPECT_EQ(c.numbers("dvr.mass_candidates"), (std::vector<double>{1836.15, 2000.0}));
}

TEST(Config, RejectsUnknownAndMalformed) {
  EXPECT_THROW(ExperimentConfig::from_string("[system]\nmas = 1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_string("bogus = 1\n"), ConfigError);
  ExperimentConfig c;
  EXPECT_THROW(c.apply_override("system.mass"), ConfigError);
  EXPECT_THROW(c.apply_override("nope=1"), ConfigError);
  c.apply_override("system.mass=abc");
  EXPECT_THROW(c.number("system.mass"), ConfigError);
  c.apply_override("initial.n_particles=2.5");
  EXPECT_THROW(c.count("initial.n_particles"), ConfigError);
  EXPECT_THROW(engine_from_string("quantum"), ConfigError);
}

TEST(Config, Overrides) {
  ExperimentConfig c;
  c.apply_override(" integration.tol = 1e-9 ");
  EXPECT_DOUBLE_EQ(c.number("integration.tol"), 1e-9);
}

TEST(Resolve, SymbolicValues) {
  auto c = preset("harmonic-C");
  const auto s = runner::resolve(c);
  const double omega = 2.0 * std::numbers::pi / 888.57;
  EXPECT_NEAR(s.beta, 2000.0 * omega, 1e-12);
  EXPECT_NEAR(s.span, 6.0 / std::sqrt(s.beta), 1e-12);
  EXPECT_EQ(s.dynamics.n_neighbors, 10u);
  EXPECT_TRUE(s.dynamics.quantum);
  EXPECT_FALSE(runner::resolve(preset("harmonic-D")).dynamics.quantum);
}

TEST(Resolve, DoubleWell) {
  const auto s = runner::resolve(preset("doublewell-dvr"));
  EXPECT_NEAR(s.x0, std::sqrt(0.01 / 0.014), 1e-15);
  ASSERT_TRUE(s.mass_resolution);
  EXPECT_DOUBLE_EQ(s.system.mass, s.mass_resolution->adopted().mass);
  ASSERT_TRUE(s.barrier_height);
  EXPECT_NEAR(*s.barrier_height, 0.01 * 0.01 / 0.028, 1e-15);
  ASSERT_TRUE(s.two_state);
  EXPECT_GT(s.two_state->omega_split, 0.0);
}

TEST(Resolve, ValidatesCrossKeyConstraints) {
  auto a = short_harmonic();
  a.apply_override("output.density_dt=7");
  EXPECT_THROW(runner::resolve(a), ConfigError);
  auto b = short_harmonic();
  b.apply_override("initial.n_particles=10");
  EXPECT_THROW(runner::resolve(b), ConfigError);
  auto c = short_harmonic();
  c.apply_override("initial.beta=well");
  EXPECT_THROW(runner::resolve(c), ConfigError);
  auto d = preset("doublewell-dvr");
  d.apply_override("integration.sample_dt=0.3");
  d.apply_override("output.density_dt=3");
  EXPECT_THROW(runner::resolve(d), ConfigError);
  auto e = short_harmonic();
  e.apply_override("engine=analytic");
  EXPECT_THROW(runner::run_experiment(e), ConfigError);
}

TEST(Presets, AllResolve) {
  EXPECT_EQ(preset_names().size(), 7u);
  for (const auto& n : preset_names()) {
    SCOPED_TRACE(n);
    const auto c = preset(n);
    EXPECT_EQ(c.raw("name"), n);
    EXPECT_NO_THROW(runner::resolve(c));
  }
  EXPECT_THROW(preset_text("harmonic-Z"), ConfigError);
}

TEST(Presets, ShippedConfigsMatch) {
  const fs::path dir = fs::path(QTRAJ_SOURCE_DIR) / "configs";
  for (const auto& n : preset_names()) {
    SCOPED_TRACE(n);
    const auto p = dir / (n + ".ini");
    ASSERT_TRUE(fs::exists(p));
    EXPECT_EQ(slurp(p), preset_text(n));
  }
}

TEST(Manifest, ListsEverySchemaKey) {
  for (const auto& n : {"harmonic-A", "doublewell-compare"}) {
    SCOPED_TRACE(n);
    const auto s = runner::resolve(preset(n));
    const io::Manifest m{s.resolved};
    for (const auto& [key, def] : ExperimentConfig::schema()) EXPECT_NE(io::manifest_lookup(m, "resolved", key), nullptr) << key;
  }
}

TEST(Run, DeterministicOutputs) {
  const auto tmp = fs::temp_directory_path() / "qtraj_test_determinism";
  fs::remove_all(tmp);
  const auto r1 = runner::run_experiment(short_harmonic());
  const auto r2 = runner::run_experiment(short_harmonic());
  const auto f1 = runner::write_outputs(r1, tmp / "a");
  const auto f2 = runner::write_outputs(r2, tmp / "b");
  ASSERT_EQ(f1, f2);
  for (const auto& f : f1) EXPECT_EQ(slurp(tmp / "a" / f), slurp(tmp / "b" / f)) << f;
  EXPECT_EQ(r1.exit_code(), runner::kExitSuccess);
  EXPECT_EQ(r1.primary.termination, runner::Termination::EndTime);
  EXPECT_DOUBLE_EQ(r1.primary.t_final, 20.0);
  // Frames land exactly on the sample grid.
  ASSERT_EQ(r1.primary.record.frames.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(r1.primary.record.frames[k].t, 5.0 * static_cast<double>(k));
  EXPECT_EQ(r1.primary.density.size(), 3u);
  fs::remove_all(tmp);
}

TEST(Run, ClassicalCrossingIsPhysicsTerminal) {
  auto c = short_harmonic("classical");
  c.apply_override("integration.t_end=300");
  c.apply_override("output.density_dt=100");
  const auto r = runner::run_experiment(c);
  EXPECT_EQ(r.primary.termination, runner::Termination::Crossing);
  ASSERT_TRUE(r.primary.crossing_time);
  EXPECT_LT(*r.primary.crossing_time, 300.0);
  EXPECT_EQ(r.exit_code(), runner::kExitPhysicsTerminal);
  EXPECT_EQ(*io::manifest_lookup(r.manifest(), "run", "exit_status"), "3");
}

TEST(Run, AnalyticCoherentMatchesMwls) {
  auto c = short_harmonic();
  c.apply_override("initial.beta=coherent");
  c.apply_override("integration.tol=1e-8");
  const auto m = runner::run_experiment(c);
  c.apply_override("engine=analytic");
  const auto a = runner::run_experiment(c);
  const auto rep = runner::compare_trajectories(m.primary.record, a.primary.record);
  for (const auto& p : rep.pairs) EXPECT_LT(p.max_dev, 1e-6) << p.label;
}

TEST(Records, RoundTrip) {
  const auto r = runner::run_experiment(short_harmonic()).primary.record;
  std::stringstream ss;
  io::write_record(ss, r);
  const auto back = io::read_record(ss);
  EXPECT_EQ(back.label, r.label);
  ASSERT_EQ(back.frames.size(), r.frames.size());
  for (std::size_t k = 0; k < r.frames.size(); ++k) {
    EXPECT_EQ(back.frames[k].t, r.frames[k].t);
    ASSERT_EQ(back.frames[k].elements.size(), r.frames[k].elements.size());
    for (std::size_t i = 0; i < r.frames[k].elements.size(); ++i) {
      const auto& x = back.frames[k].elements[i];
      const auto& y = r.frames[k].elements[i];
      EXPECT_EQ(x.index, y.index);
      EXPECT_EQ(x.x, y.x);
      EXPECT_EQ(x.rho, y.rho);
      EXPECT_EQ(x.E, y.E);
    }
  }
  std::stringstream bad("# record x\n0 1 2\n");
  EXPECT_THROW(io::read_record(bad), std::runtime_error);
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(io::fmt(0.1), "0.1");
  EXPECT_EQ(io::fmt(-2.5e-7), "-2.5e-07");
  EXPECT_EQ(io::fmt(std::numeric_limits<double>::infinity()), "inf");
  const double v = 1.0 / 3.0;
  EXPECT_EQ(std::stod(io::fmt(v)), v);
}

class Comparison : public ::testing::Test {
 protected:
  static TrajectoryRecord make(const std::string& label, double shift) {
    TrajectoryRecord r;
    r.label = label;
    for (int k = 0; k <= 4; ++k) {
      RecordFrame f{10.0 * k, {}};
      for (std::size_t i = 0; i < 3; ++i) {
        ElementSample e;
        e.index = i;
        e.x = static_cast<double>(i) + (k ? shift * k * (i + 1) : 0.0);
        f.elements.push_back(e);
      }
      r.push(std::move(f));
    }
    return r;
  }
};

TEST_F(Comparison, IdenticalRecordsGiveZero) {
  const auto a = make("a", 0.0);
  const auto rep = runner::compare_trajectories(a, a);
  ASSERT_EQ(rep.pairs.size(), 3u);
  for (const auto& p : rep.pairs) {
    EXPECT_EQ(p.max_dev, 0.0);
    EXPECT_EQ(p.samples, 5u);
  }
}

TEST_F(Comparison, DeviationWindowAndInterpolation) {
  const auto a = make("a", 0.0);
  const auto b = make("b", 0.01);
  runner::ComparisonOptions opt;
  opt.t_stop = 20.0;
  const auto rep = runner::compare_trajectories(a, b, opt);
  EXPECT_DOUBLE_EQ(rep.t_stop, 20.0);
  EXPECT_NEAR(rep.by_label(3).max_dev, 0.06, 1e-15);
  EXPECT_DOUBLE_EQ(rep.by_label(3).t_max_dev, 20.0);
  EXPECT_EQ(rep.by_label(3).samples, 3u);
  EXPECT_NEAR(runner::interpolate_position(b, 0, 15.0), 0.015, 1e-15);
  EXPECT_THROW(rep.by_label(9), std::out_of_range);
}

TEST_F(Comparison, PairingErrors) {
  const auto a = make("a", 0.0);
  auto b = make("b", 0.0);
  b.frames.front().elements[1].x += 0.1;
  EXPECT_THROW(runner::compare_trajectories(a, b), runner::PairingError);
  runner::ComparisonOptions opt;
  opt.pairing = {{0, 5}};
  EXPECT_THROW(runner::compare_trajectories(a, a, opt), runner::PairingError);
  TrajectoryRecord small;
  small.push(RecordFrame{0.0, {ElementSample{}}});
  EXPECT_THROW(runner::compare_trajectories(a, small), runner::PairingError);
}

TEST(Plot, Formats) {
  const auto r = runner::run_experiment(short_harmonic());
  std::stringstream traj, dens;
  runner::emit_plot_data(r, runner::plot_kind_from_string("trajectories"), traj);
  runner::emit_plot_data(r, runner::plot_kind_from_string("density-snapshots"), dens);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(traj, line))
    if (!line.empty() && line[0] != '#') {
      ++rows;
      std::istringstream in(line);
      std::size_t cols = 0;
      double v;
      while (in >> v) ++cols;
      EXPECT_EQ(cols, 31u);
    }
  EXPECT_EQ(rows, 5u);
  EXPECT_NE(dens.str().find("# t = 10"), std::string::npos);
  std::stringstream cmp;
  EXPECT_THROW(runner::emit_plot_data(r, runner::PlotKind::Comparison, cmp), ConfigError);
  EXPECT_THROW(runner::plot_kind_from_string("histogram"), ConfigError);
}

}  // namespace

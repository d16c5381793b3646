// qtraj: run trajectory experiments, compare records, list presets.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "qtraj/config.hpp"
#include "qtraj/io.hpp"
#include "qtraj/runner.hpp"

namespace {

using namespace qtraj;

ExperimentConfig load_config(const std::string& source) {
  if (std::filesystem::exists(source)) return ExperimentConfig::from_file(source);
  for (const auto& name : preset_names())
    if (name == source) return preset(name);
  throw ConfigError("'" + source + "' is neither a config file nor a preset");
}

int cmd_run(const std::string& source, const std::vector<std::string>& overrides, std::string out_dir) {
  auto cfg = load_config(source);
  for (const auto& kv : overrides) cfg.apply_override(kv);
  const auto setup = runner::resolve(cfg);
  if (out_dir.empty()) out_dir = "out/" + setup.name;
  const auto result = runner::run_experiment(setup);
  const auto files = runner::write_outputs(result, out_dir);

  const auto& p = result.primary;
  std::cout << setup.name << ": engine " << to_string(setup.engine) << ", " << runner::to_string(p.termination)
            << " at t = " << io::fmt(p.t_final) << '\n';
  if (result.reference)
    std::cout << "reference " << result.reference->record.label << ": "
              << runner::to_string(result.reference->termination) << " at t = "
              << io::fmt(result.reference->t_final) << '\n';
  if (setup.mass_resolution) {
    const auto& mr = *setup.mass_resolution;
    std::cout << "mass " << io::fmt(mr.adopted().mass) << " (doublet residual " << io::fmt(mr.adopted().residual_cm)
              << " cm^-1, " << (mr.matched ? "matched" : "nearest") << ")\n";
  }
  std::cout << "wrote";
  for (const auto& f : files) std::cout << ' ' << f;
  std::cout << " to " << out_dir << '\n';
  return result.exit_code();
}

int cmd_compare(const std::string& a_path, const std::string& b_path, double t_start, double t_stop,
                const std::string& out_path) {
  const auto a = io::read_record_file(a_path);
  const auto b = io::read_record_file(b_path);
  runner::ComparisonOptions opt;
  opt.t_start = t_start;
  opt.t_stop = t_stop;
  const auto rep = runner::compare_trajectories(a, b, opt);
  if (out_path.empty()) {
    runner::write_comparison(std::cout, rep, a, b);
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    runner::write_comparison(f, rep, a, b);
    double worst = 0.0;
    for (const auto& p : rep.pairs) worst = std::max(worst, p.max_dev);
    std::cout << rep.pairs.size() << " pairs, largest deviation " << io::fmt(worst) << " bohr\n";
  }
  return runner::kExitSuccess;
}

int cmd_presets(const std::string& write_dir) {
  for (const auto& name : preset_names()) {
    std::cout << name << '\n';
    if (write_dir.empty()) continue;
    std::filesystem::create_directories(write_dir);
    std::ofstream f(std::filesystem::path(write_dir) / (name + ".ini"));
    f << preset_text(name);
  }
  return runner::kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum trajectory experiments in one dimension"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a config file or preset name");
  std::string source, out_dir;
  std::vector<std::string> overrides;
  run->add_option("config", source, "Config file or preset name")->required();
  run->add_option("--out", out_dir, "Output directory (default out/<name>)");
  run->add_option("--override", overrides, "section.key=value, repeatable")->take_all();

  auto* cmp = app.add_subcommand("compare", "Compare two trajectory records");
  std::string rec_a, rec_b, cmp_out;
  double t_start = 0.0;
  double t_stop = std::numeric_limits<double>::infinity();
  cmp->add_option("record_a", rec_a, "First record (records.dat)")->required();
  cmp->add_option("record_b", rec_b, "Second record")->required();
  cmp->add_option("--t-start", t_start, "Window start [a.u.]");
  cmp->add_option("--t-stop", t_stop, "Window end [a.u.]");
  cmp->add_option("--out", cmp_out, "Write the report to this file instead of stdout");

  auto* pre = app.add_subcommand("presets", "List built-in presets");
  std::string write_dir;
  pre->add_option("--write", write_dir, "Also write each preset as <dir>/<name>.ini");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : runner::kExitConfigError;
  }

  try {
    if (*run) return cmd_run(source, overrides, out_dir);
    if (*cmp) return cmd_compare(rec_a, rec_b, t_start, t_stop, cmp_out);
    if (*pre) return cmd_presets(write_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return runner::kExitConfigError;
  } catch (const runner::PairingError& e) {
    std::cerr << "pairing error: " << e.what() << '\n';
    return runner::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runner::kExitFailure;
  }
  return runner::kExitFailure;
}

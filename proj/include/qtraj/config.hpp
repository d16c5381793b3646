#pragma once

// Experiment configuration: flat `key = value` files with [section] headers,
// built-in presets, `section.key=value` overrides and resolution of symbolic
// values ("coherent", "well", "auto", "resolve") into numbers.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qtraj/core.hpp"

namespace qtraj {

enum class Engine { Mwls, Classical, Dvr, Analytic, Compare };

inline std::string to_string(Engine e) {
  switch (e) {
    case Engine::Mwls: return "mwls";
    case Engine::Classical: return "classical";
    case Engine::Dvr: return "dvr";
    case Engine::Analytic: return "analytic";
    case Engine::Compare: return "compare";
  }
  return "?";
}

inline Engine engine_from_string(const std::string& s) {
  if (s == "mwls") return Engine::Mwls;
  if (s == "classical") return Engine::Classical;
  if (s == "dvr") return Engine::Dvr;
  if (s == "analytic") return Engine::Analytic;
  if (s == "compare") return Engine::Compare;
  throw ConfigError("unknown engine '" + s + "'");
}

/// Raw key/value settings. Keys are "section.key"; top-level keys have no dot.
class ExperimentConfig {
 public:
  /// Every accepted key with its default.
  static const std::vector<std::pair<std::string, std::string>>& schema() {
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"name", "experiment"},
        {"engine", "mwls"},
        {"system.mass", "2000"},
        {"system.potential", "harmonic"},
        {"system.period", "888.57"},
        {"system.center", "0"},
        {"system.a", "0.007"},
        {"system.b", "0.01"},
        {"system.coeffs", ""},
        {"initial.x0", "3.0"},
        {"initial.beta", "0.3"},
        {"initial.n_particles", "100"},
        {"initial.span", "auto"},
        {"integration.dt0", "0.1"},
        {"integration.tol", "1e-6"},
        {"integration.dt_min", "1e-4"},
        {"integration.dt_max", "5"},
        {"integration.t_end", "888.57"},
        {"integration.sample_dt", "5"},
        {"mwls.order", "4"},
        {"mwls.n_neighbors", "auto"},
        {"mwls.basis", "hermite"},
        {"mwls.smoothing_order", "3"},
        {"mwls.smoothing_neighbors", "10"},
        {"dvr.n_points", "200"},
        {"dvr.x_left", "-2.5"},
        {"dvr.x_right", "2.5"},
        {"dvr.dt_int", "0.25"},
        {"dvr.mass_candidates", "1836.15 2000"},
        {"dvr.doublet", "-369.827 -313.918"},
        {"dvr.doublet_tolerance", "1.0"},
        {"dvr.wavenumber_per_hartree", "219474.6313632"},
        {"barrier.reference", "analytic"},
        {"barrier.quoted_cm", "786.24"},
        {"compare.t_start", "0"},
        {"compare.t_stop", "auto"},
        {"output.density_dt", "50"},
    };
    return keys;
  }

  ExperimentConfig() {
    for (const auto& [k, v] : schema()) values_[k] = v;
  }

  static ExperimentConfig from_string(const std::string& text) {
    std::istringstream in(text);
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig c;
    for (const auto& [key, node] : tree) {
      if (node.empty()) {
        c.set(key, node.data());
        continue;
      }
      for (const auto& [sub, leaf] : node) {
        if (!leaf.empty()) throw ConfigError("nested sections are not supported: " + key + "." + sub);
        c.set(key + "." + sub, leaf.data());
      }
    }
    return c;
  }

  static ExperimentConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str());
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = trim(value);
  }

  /// "section.key=value"
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const { return parse_number(key, raw(key)); }

  std::size_t count(const std::string& key) const {
    const double v = number(key);
    if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError(key + " must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    std::istringstream in(raw(key));
    std::string tok;
    while (in >> tok) out.push_back(parse_number(key, tok));
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  static double parse_number(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects a number, got '" + s + "'");
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Presets

inline const std::vector<std::pair<std::string, std::string>>& preset_texts() {
  static const std::vector<std::pair<std::string, std::string>> presets = {
      {"harmonic-A",
       "# Quantum trajectories in a harmonic well, m = 2000, ten periods.\n"
       "name = harmonic-A\n"
       "engine = mwls\n\n"
       "[system]\nmass = 2000\npotential = harmonic\nperiod = 888.57\n\n"
       "[initial]\nx0 = 3.0\nbeta = 0.3\nn_particles = 100\n\n"
       "[integration]\nt_end = 8885.7\nsample_dt = 5\n"},
      {"harmonic-B",
       "# As harmonic-A with the lighter mass m = 200, two periods.\n"
       "name = harmonic-B\n"
       "engine = mwls\n\n"
       "[system]\nmass = 200\npotential = harmonic\nperiod = 888.57\n\n"
       "[initial]\nx0 = 3.0\nbeta = 0.3\nn_particles = 100\n\n"
       "[integration]\nt_end = 1777.14\nsample_dt = 5\n"},
      {"harmonic-C",
       "# Coherent state: beta = m omega, one period. The tighter tolerance keeps\n"
       "# the per-trajectory energy within 1e-3 hbar omega of the closed form.\n"
       "name = harmonic-C\n"
       "engine = mwls\n\n"
       "[system]\nmass = 2000\npotential = harmonic\nperiod = 888.57\n\n"
       "[initial]\nx0 = 3.0\nbeta = coherent\nn_particles = 100\n\n"
       "[integration]\ntol = 1e-8\nt_end = 888.57\nsample_dt = 5\n"},
      {"harmonic-D",
       "# Classical trajectories (Q = 0) from the harmonic-A initial state.\n"
       "name = harmonic-D\n"
       "engine = classical\n\n"
       "[system]\nmass = 2000\npotential = harmonic\nperiod = 888.57\n\n"
       "[initial]\nx0 = 3.0\nbeta = 0.3\nn_particles = 100\n\n"
       "[integration]\nt_end = 888.57\nsample_dt = 5\n"},
      {"doublewell-mwls",
       "# Tunnelling in V = a x^4 - b x^2 from a Gaussian in the right well.\n"
       "name = doublewell-mwls\n"
       "engine = mwls\n\n"
       "[system]\nmass = resolve\npotential = doublewell\na = 0.007\nb = 0.01\n\n"
       "[initial]\nx0 = well\nbeta = well\nn_particles = 100\n\n"
       "[integration]\nt_end = 1000\nsample_dt = 2\n"},
      {"doublewell-dvr",
       "# Reference DVR wavepacket and pilot-wave trajectories for the double well.\n"
       "name = doublewell-dvr\n"
       "engine = dvr\n\n"
       "[system]\nmass = resolve\npotential = doublewell\na = 0.007\nb = 0.01\n\n"
       "[initial]\nx0 = well\nbeta = well\nn_particles = 100\n\n"
       "[integration]\nt_end = 1000\nsample_dt = 2\n\n"
       "[dvr]\nn_points = 200\nx_left = -2.5\nx_right = 2.5\n"},
      {"doublewell-compare",
       "# MWLS and DVR trajectories from identical initial conditions.\n"
       "name = doublewell-compare\n"
       "engine = compare\n\n"
       "[system]\nmass = resolve\npotential = doublewell\na = 0.007\nb = 0.01\n\n"
       "[initial]\nx0 = well\nbeta = well\nn_particles = 100\n\n"
       "[integration]\nt_end = 1000\nsample_dt = 2\n\n"
       "[dvr]\nn_points = 200\nx_left = -2.5\nx_right = 2.5\n"},
  };
  return presets;
}

inline std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [n, t] : preset_texts()) names.push_back(n);
  return names;
}

inline const std::string& preset_text(const std::string& name) {
  for (const auto& [n, t] : preset_texts())
    if (n == name) return t;
  throw ConfigError("unknown preset '" + name + "'");
}

inline ExperimentConfig preset(const std::string& name) { return ExperimentConfig::from_string(preset_text(name)); }

}  // namespace qtraj

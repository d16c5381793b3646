#pragma once

// Plain-text output: trajectory records, manifests and columnar plot files.
// Columns are space separated; header lines start with '#'.

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qtraj/record.hpp"

namespace qtraj::io {

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

inline std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest: [section] headers followed by key = value lines.

struct ManifestSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, fmt(value)); }
};

using Manifest = std::vector<ManifestSection>;

inline void write_manifest(std::ostream& os, const Manifest& m) {
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (s) os << '\n';
    os << '[' << m[s].name << "]\n";
    for (const auto& [k, v] : m[s].entries) os << k << " = " << v << '\n';
  }
}

inline const std::string* manifest_lookup(const Manifest& m, const std::string& section, const std::string& key) {
  for (const auto& sec : m)
    if (sec.name == section)
      for (const auto& [k, v] : sec.entries)
        if (k == key) return &v;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Trajectory records

inline constexpr const char* kRecordColumns = "t index x v rho Q V S logJ E";
inline constexpr const char* kRecordUnits = "a.u. - bohr bohr/a.u. 1/bohr hartree hartree hbar - hartree";

inline void write_record(std::ostream& os, const TrajectoryRecord& r) {
  os << "# record " << r.label << '\n';
  os << "# columns " << kRecordColumns << '\n';
  os << "# units " << kRecordUnits << '\n';
  for (const auto& f : r.frames) {
    os << '\n';
    for (const auto& e : f.elements) {
      os << fmt(f.t) << ' ' << e.index << ' ' << fmt(e.x) << ' ' << fmt(e.v) << ' ' << fmt(e.rho) << ' ' << fmt(e.Q)
         << ' ' << fmt(e.V) << ' ' << fmt(e.S) << ' ' << fmt(e.logJ) << ' ' << fmt(e.E) << '\n';
    }
  }
}

inline TrajectoryRecord read_record(std::istream& is) {
  TrajectoryRecord r;
  RecordFrame frame;
  bool open = false;
  auto flush = [&] {
    if (open) r.push(std::move(frame));
    frame = RecordFrame{};
    open = false;
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      if (line.rfind("# record ", 0) == 0) r.label = line.substr(9);
      continue;
    }
    std::istringstream in(line);
    double t = 0.0;
    ElementSample e;
    if (!(in >> t >> e.index >> e.x >> e.v >> e.rho >> e.Q >> e.V >> e.S >> e.logJ >> e.E))
      throw std::runtime_error("malformed record line " + std::to_string(line_no));
    if (open && t != frame.t) flush();
    if (!open) {
      frame.t = t;
      open = true;
    }
    frame.elements.push_back(e);
  }
  flush();
  return r;
}

inline TrajectoryRecord read_record_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open record '" + path + "'");
  return read_record(f);
}

/// One row per sample time: t followed by x of every element.
inline void write_trajectories(std::ostream& os, const TrajectoryRecord& r) {
  os << "# trajectories " << r.label << ": t [a.u.] then x_k [bohr] for k = 1.." << r.element_count()
     << " (left to right at t = 0)\n";
  os << "# t";
  for (std::size_t k = 1; k <= r.element_count(); ++k) os << " x_" << k;
  os << '\n';
  for (const auto& f : r.frames) {
    os << fmt(f.t);
    for (const auto& e : f.elements) os << ' ' << fmt(e.x);
    os << '\n';
  }
}

}  // namespace qtraj::io

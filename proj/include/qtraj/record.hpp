#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtraj {

/// Per-element observables at one sample time.
struct ElementSample {
  std::size_t index = 0;
  double x = 0.0;
  double v = 0.0;
  double rho = 0.0;
  double Q = 0.0;
  double V = 0.0;
  double S = 0.0;
  double logJ = 0.0;
  double E = 0.0;
};

struct RecordFrame {
  double t = 0.0;
  std::vector<ElementSample> elements;
};

/// Time series of per-trajectory observables.
struct TrajectoryRecord {
  std::string label;
  std::vector<RecordFrame> frames;

  std::size_t element_count() const { return frames.empty() ? 0 : frames.front().elements.size(); }

  void push(RecordFrame f) {
    if (!frames.empty()) {
      if (!(f.t > frames.back().t)) throw std::invalid_argument("record times must increase");
      if (f.elements.size() != element_count()) throw std::invalid_argument("record element count changed");
    }
    frames.push_back(std::move(f));
  }

  std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(frames.size());
    for (const auto& f : frames) t.push_back(f.t);
    return t;
  }

  /// Positions of element slot k over time.
  std::vector<double> positions(std::size_t k) const {
    std::vector<double> x;
    x.reserve(frames.size());
    for (const auto& f : frames) x.push_back(f.elements.at(k).x);
    return x;
  }
};

}  // namespace qtraj

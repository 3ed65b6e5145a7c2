#pragma once

#include <cmath>
#include <string>
#include <limits>
#include <vector>

#include <json.hpp>

#include "belab/errors.hpp"

namespace belab {

using json = nlohmann::json;

// Parameters of the curvature hypothesis Ric_X^m >= -(n-1) delta g with |X| <= C.
struct BakryEmeryParams {
  double m = 1.0;
  double delta = 0.0;
  double C = 0.0;

  void validate() const {
    if (!(m > 0.0)) throw DomainError("BakryEmeryParams: m must be > 0");
    if (!(delta >= 0.0)) throw DomainError("BakryEmeryParams: delta must be >= 0");
    if (!(C >= 0.0)) throw DomainError("BakryEmeryParams: C must be >= 0");
  }

  json to_json() const { return json{{"m", m}, {"delta", delta}, {"C", C}}; }
};

// Outcome of one numerical check. passed <=> margin >= -tolerance.
struct VerificationReport {
  std::string check_name;
  json inputs = json::object();
  json lhs;
  json rhs;
  double margin = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  json resolution = json::object();
  std::string notes;

  VerificationReport& finalize() {
    passed = std::isfinite(margin) ? margin >= -tolerance : margin > 0.0;
    return *this;
  }

  json to_json() const {
    json j;
    j["check_name"] = check_name;
    j["inputs"] = inputs;
    j["lhs"] = lhs;
    j["rhs"] = rhs;
    j["margin"] = margin;
    j["tolerance"] = tolerance;
    j["passed"] = passed;
    j["resolution"] = resolution;
    j["notes"] = notes;
    return j;
  }
};

// Ladder trend: each value must drop to at most (1 - min_drop) times the previous one.
inline VerificationReport ladder_trend(const std::string& name, const std::vector<double>& values,
                                       double min_drop, double tolerance = 0.0) {
  VerificationReport r;
  r.check_name = name;
  r.lhs = values;
  r.inputs["min_drop"] = min_drop;
  r.tolerance = tolerance;
  if (values.size() < 2) throw DomainError("ladder_trend: need at least two rungs");
  std::vector<double> limits;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < values.size(); ++k) {
    const double limit = (1.0 - min_drop) * values[k - 1];
    limits.push_back(limit);
    double gap = limit - values[k];
    // strict decrease is required even when min_drop is zero
    if (min_drop == 0.0 && !(values[k] < values[k - 1])) gap = std::min(gap, -1.0);
    margin = std::min(margin, gap);
  }
  r.rhs = limits;
  r.margin = margin;
  r.notes = min_drop > 0.0 ? "each rung at most (1 - min_drop) times the previous" : "strictly decreasing";
  r.finalize();
  return r;
}

}  // namespace belab

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "phnn/tensor.hpp"

namespace phnn {

struct GradcheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  // Elements below the resolution floor are checked for absolute
  // agreement instead; this is their worst |analytic - numeric|.
  double max_subfloor_abs = 0.0;
  long long checked = 0;
  long long below_floor = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double worst() const;
  double worst_subfloor() const;
  // Sub-floor elements must still agree absolutely to 1e-6.
  bool pass(double tol) const { return worst() < tol && worst_subfloor() < 1e-6; }
};

// Central finite differences against the tape gradients. f is re-evaluated
// with each selected parameter element nudged by +/-eps; relative error is
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
//
// Central differences cannot resolve a relative error on elements whose
// gradient magnitude sits below the roundoff of f divided by eps. Elements
// with |analytic| + |numeric| < rel_floor are therefore excluded from the
// relative maximum and instead checked for absolute agreement
// (max_subfloor_abs); a floor of 0 checks everything relatively.
//
// max_checks_per_param < 0 checks every element; otherwise a seeded sample
// of that many elements per parameter.
GradcheckReport gradcheck(const std::function<Tensor()>& f, const std::vector<Parameter>& params,
                          double eps = 1e-5, long long max_checks_per_param = -1,
                          uint64_t sample_seed = 0, double rel_floor = 0.0);

// The standard battery: one entry per op plus the composed staged-model
// loss. Used by the CLI gradcheck command, the unit tests and the
// acceptance suite.
struct BatteryResult {
  struct Line {
    std::string op;
    double max_rel_err;
    double tol;
    bool pass() const { return max_rel_err < tol; }
  };
  std::vector<Line> lines;
  bool all_pass() const;
};

BatteryResult run_gradcheck_battery(uint64_t seed);

}  // namespace phnn

#pragma once

#include <string>
#include <vector>

namespace beaconopt {

struct SelfCheckLine {
  std::string name;
  double max_rel_error = 0.0;  // gradient checks; 0 for invariant checks
  bool passed = false;
  std::string detail;
};

struct SelfCheckReport {
  std::vector<SelfCheckLine> lines;
  double worst_gradient_error = 0.0;
  bool passed() const;
};

struct SelfCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Negative control: adds a primitive whose backward rule is deliberately wrong.
  bool corrupt_backward = false;
};

/// Finite-difference checks of every tape primitive, of the relaxed
/// measurement pipeline w.r.t. placement weights, and of the full training
/// loss w.r.t. a random subset of network parameters; plus invariant smoke
/// tests. Deterministic.
SelfCheckReport run_selfcheck(const SelfCheckOptions& options = {});

std::string format_selfcheck(const SelfCheckReport& report);

}  // namespace beaconopt

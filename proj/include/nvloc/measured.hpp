#pragma once

namespace nvloc {

/// A value with its 1-sigma uncertainty, same units.
struct Measured {
  double value = 0.0;
  double sigma = 0.0;
};

}  // namespace nvloc

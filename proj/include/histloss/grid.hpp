#pragma once

#include <vector>

namespace histloss {

// Uniform partition of the energy axis (eV/atom) into k bins of width w.
// Bin i spans [lo + i*w, lo + (i+1)*w) and has center lo + (i+0.5)*w.
struct BinGrid {
  int k = 0;
  double lo = 0.0;
  double hi = 0.0;
  double width = 0.0;  // (hi - lo) / k
  std::vector<double> centers;

  double left_edge(int i) const { return lo + i * width; }
};

// Throws std::invalid_argument for k < 2, hi <= lo, or non-finite bounds.
BinGrid make_grid(double lo, double hi, int k);

}  // namespace histloss

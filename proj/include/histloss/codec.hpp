#pragma once

#include <span>
#include <vector>

#include "histloss/grid.hpp"

namespace histloss {

// Gaussian smoothing width, tied to the grid as sigma = sigma_multiplier * w.
struct EncodeConfig {
  double sigma = 0.0;
  double sigma_multiplier = 0.0;
};

EncodeConfig make_encode_config(const BinGrid& grid, double sigma_multiplier);

// Probability masses over grid bins; nonnegative, sums to 1 within 1e-9.
struct TargetHistogram {
  std::vector<double> probs;
};

// Per-encode diagnostics. off_grid means less than half of the Gaussian's
// mass landed inside [lo, hi] before renormalization, i.e. the label is
// effectively outside the grid.
struct EncodeInfo {
  double in_range_mass = 0.0;
  bool off_grid = false;
};

// Standard normal CDF via erfc; absolute error well under 1e-7.
double normal_cdf(double x);

// Discretizes N(e, sigma^2) onto the grid: bin i gets mass
// Phi((l_i + w - e)/sigma) - Phi((l_i - e)/sigma), and the in-range masses
// are renormalized to sum to 1. If the in-range mass underflows to zero the
// limit is a point mass at the nearest bin.
TargetHistogram encode_target(double e, const EncodeConfig& cfg, const BinGrid& grid,
                              EncodeInfo* info = nullptr);

// Expectation decode: sum_i p_i * c_i. Requires probs.size() == grid.k and
// sum(probs) within 1e-6 of 1.
double decode_expectation(std::span<const double> probs, const BinGrid& grid);

// Shannon entropy in nats, with 0*ln(0) = 0. Rejects negative entries.
double entropy(std::span<const double> probs);

}  // namespace histloss

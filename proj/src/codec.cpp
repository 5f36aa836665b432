#include "histloss/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "histloss/util.hpp"

namespace histloss {

BinGrid make_grid(double lo, double hi, int k) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("make_grid: bounds must be finite");
  }
  if (k < 2) {
    throw std::invalid_argument("make_grid: need at least 2 bins, got " + std::to_string(k));
  }
  if (!(hi > lo)) {
    throw std::invalid_argument("make_grid: hi must exceed lo (got [" + format_g17(lo) + ", " +
                                format_g17(hi) + "])");
  }
  BinGrid grid;
  grid.k = k;
  grid.lo = lo;
  grid.hi = hi;
  grid.width = (hi - lo) / k;
  grid.centers.resize(k);
  for (int i = 0; i < k; ++i) {
    grid.centers[i] = lo + (i + 0.5) * grid.width;
  }
  return grid;
}

EncodeConfig make_encode_config(const BinGrid& grid, double sigma_multiplier) {
  if (!(sigma_multiplier > 0.0) || !std::isfinite(sigma_multiplier)) {
    throw std::invalid_argument("encode config: sigma multiplier must be positive");
  }
  return EncodeConfig{sigma_multiplier * grid.width, sigma_multiplier};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

TargetHistogram encode_target(double e, const EncodeConfig& cfg, const BinGrid& grid,
                              EncodeInfo* info) {
  if (!std::isfinite(e)) {
    throw std::invalid_argument("encode_target: energy must be finite");
  }
  if (!(cfg.sigma > 0.0)) {
    throw std::invalid_argument("encode_target: sigma must be positive");
  }

  const int k = grid.k;
  TargetHistogram target;
  target.probs.resize(k);

  // One CDF evaluation per edge; adjacent bins share an edge so the masses
  // telescope to cdf(hi) - cdf(lo) exactly.
  double prev = normal_cdf((grid.lo - e) / cfg.sigma);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    const double next = normal_cdf((grid.left_edge(i + 1) - e) / cfg.sigma);
    const double mass = std::max(0.0, next - prev);
    target.probs[i] = mass;
    total += mass;
    prev = next;
  }

  if (info != nullptr) {
    info->in_range_mass = total;
    info->off_grid = total < 0.5;
  }

  if (total < 1e-300) {
    // Complete underflow: the renormalized truncated Gaussian degenerates to
    // a point mass at the nearest bin.
    std::fill(target.probs.begin(), target.probs.end(), 0.0);
    const int nearest =
        e <= grid.lo ? 0
                     : std::min(k - 1, static_cast<int>((e - grid.lo) / grid.width));
    target.probs[nearest] = 1.0;
    return target;
  }

  for (double& p : target.probs) {
    p /= total;
  }
  return target;
}

double decode_expectation(std::span<const double> probs, const BinGrid& grid) {
  if (static_cast<int>(probs.size()) != grid.k) {
    throw std::invalid_argument("decode_expectation: expected " + std::to_string(grid.k) +
                                " probabilities, got " + std::to_string(probs.size()));
  }
  double sum = 0.0;
  double e_hat = 0.0;
  for (int i = 0; i < grid.k; ++i) {
    sum += probs[i];
    e_hat += probs[i] * grid.centers[i];
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("decode_expectation: probabilities sum to " + format_g17(sum) +
                                ", expected 1 within 1e-6");
  }
  return e_hat;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) {
      throw std::invalid_argument("entropy: negative probability " + format_g17(p));
    }
    if (p > 0.0) {
      h -= p * std::log(p);
    }
  }
  return std::max(0.0, h);
}

}  // namespace histloss

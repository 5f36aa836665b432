#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "histloss/codec.hpp"
#include "histloss/rng.hpp"
#include "oracles.hpp"

using namespace histloss;

TEST_CASE("make_grid basic layout") {
  const BinGrid g = make_grid(0.0, 1.0, 4);
  CHECK(g.width == 0.25);
  CHECK(g.centers == std::vector<double>{0.125, 0.375, 0.625, 0.875});

  const BinGrid wide = make_grid(-2.0, 2.0, 128);
  CHECK(wide.width == 0.03125);
  CHECK(wide.centers[0] == -1.984375);
  CHECK(wide.centers.size() == 128);
}

TEST_CASE("make_grid rejects degenerate input") {
  CHECK_THROWS_AS(make_grid(1.0, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(1.0, 0.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(0.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(0.0, std::numeric_limits<double>::infinity(), 4),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_grid(std::nan(""), 1.0, 4), std::invalid_argument);
}

TEST_CASE("normal_cdf fixed points") {
  CHECK(normal_cdf(0.0) == 0.5);
  // Frozen from high-precision quadrature of the standard normal density.
  CHECK(std::abs(normal_cdf(1.959964) - 0.9750000009035576) < 1e-9);
  CHECK(normal_cdf(-8.0) < 1e-14);
  CHECK(normal_cdf(-8.0) > 0.0);
}

TEST_CASE("normal_cdf matches quadrature, symmetry, monotone") {
  double prev = -1.0;
  for (int i = -60; i <= 60; ++i) {
    const double x = i * 0.1;
    const double phi = normal_cdf(x);
    CHECK(std::abs(phi - oracle::quadrature_normal_cdf(x)) < 1e-7);
    CHECK(std::abs(normal_cdf(-x) - (1.0 - phi)) < 1e-12);
    CHECK(phi >= prev);
    CHECK(phi >= 0.0);
    CHECK(phi <= 1.0);
    prev = phi;
  }
}

TEST_CASE("encode_target near-one-hot for tiny sigma") {
  const BinGrid g = make_grid(-1.0, 3.0, 16);
  const EncodeConfig cfg = make_encode_config(g, 0.01);
  const int j = 5;
  const TargetHistogram t = encode_target(g.centers[j], cfg, g);
  CHECK(t.probs[j] > 0.999);
  double neighborhood = t.probs[j];
  if (j > 0) neighborhood += t.probs[j - 1];
  if (j + 1 < g.k) neighborhood += t.probs[j + 1];
  CHECK(neighborhood == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("encode_target mirror symmetry at the grid midpoint") {
  const BinGrid g = make_grid(-2.0, 6.0, 32);
  const EncodeConfig cfg = make_encode_config(g, 0.75);
  const TargetHistogram t = encode_target(2.0, cfg, g);
  for (int i = 0; i < g.k; ++i) {
    CHECK(std::abs(t.probs[i] - t.probs[g.k - 1 - i]) < 1e-12);
  }
}

TEST_CASE("encode_target frozen quadrature fixture") {
  // grid (0,1,k=4), sigma = 0.75 * w = 0.1875, e = 0.5; expected masses from
  // high-precision quadrature of the Gaussian over each bin, renormalized.
  const BinGrid g = make_grid(0.0, 1.0, 4);
  const EncodeConfig cfg = make_encode_config(g, 0.75);
  CHECK(cfg.sigma == 0.1875);
  const TargetHistogram t = encode_target(0.5, cfg, g);
  const std::vector<double> expected{0.08805541062574209, 0.4119445893742579,
                                     0.4119445893742579, 0.08805541062574209};
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(t.probs[i] - expected[i]) < 1e-9);
  }
  CHECK(t.probs[1] == doctest::Approx(t.probs[2]).epsilon(1e-12));
  CHECK(t.probs[0] == doctest::Approx(t.probs[3]).epsilon(1e-12));
}

TEST_CASE("encode_target rejects and flags") {
  const BinGrid g = make_grid(0.0, 1.0, 8);
  const EncodeConfig cfg = make_encode_config(g, 0.75);
  CHECK_THROWS_AS(encode_target(std::nan(""), cfg, g), std::invalid_argument);
  CHECK_THROWS_AS(make_encode_config(g, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_encode_config(g, -1.0), std::invalid_argument);

  EncodeInfo info;
  encode_target(0.5, cfg, g, &info);
  CHECK(info.in_range_mass > 0.99);
  CHECK_FALSE(info.off_grid);

  encode_target(2.0, cfg, g, &info);  // a full grid span above hi
  CHECK(info.off_grid);
  CHECK(info.in_range_mass < 0.5);
}

TEST_CASE("encode_target underflow degenerates to nearest-bin point mass") {
  const BinGrid g = make_grid(0.0, 1.0, 4);
  const EncodeConfig cfg = make_encode_config(g, 0.001);
  EncodeInfo info;
  const TargetHistogram t = encode_target(50.0, cfg, g, &info);
  CHECK(info.in_range_mass == 0.0);
  CHECK(info.off_grid);
  CHECK(t.probs == std::vector<double>{0.0, 0.0, 0.0, 1.0});

  const TargetHistogram low = encode_target(-50.0, cfg, g);
  CHECK(low.probs == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("decode_expectation point mass, uniform, and validation") {
  const BinGrid g = make_grid(-1.0, 1.0, 8);
  std::vector<double> onehot(8, 0.0);
  onehot[3] = 1.0;
  CHECK(decode_expectation(onehot, g) == g.centers[3]);

  const std::vector<double> uniform(8, 0.125);
  CHECK(decode_expectation(uniform, g) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(decode_expectation(std::vector<double>(7, 1.0 / 7), g),
                  std::invalid_argument);
  CHECK_THROWS_AS(decode_expectation(std::vector<double>(8, 0.3), g), std::invalid_argument);
}

TEST_CASE("decode(encode) round trip mid-range") {
  const BinGrid g = make_grid(-2.0, 2.0, 128);
  const EncodeConfig cfg = make_encode_config(g, 0.75);
  for (double e : {-0.731, 0.0, 0.25, 1.1}) {
    const TargetHistogram t = encode_target(e, cfg, g);
    CHECK(std::abs(decode_expectation(t.probs, g) - e) < 1e-6);
  }
}

TEST_CASE("entropy fixed points") {
  std::vector<double> onehot(16, 0.0);
  onehot[7] = 1.0;
  CHECK(entropy(onehot) == 0.0);

  const std::vector<double> uniform(128, 1.0 / 128);
  CHECK(std::abs(entropy(uniform) - 4.852030263919617) < 1e-12);

  CHECK(std::abs(entropy(std::vector<double>{0.5, 0.5, 0.0, 0.0}) - std::log(2.0)) < 1e-15);
  CHECK_THROWS_AS(entropy(std::vector<double>{0.5, -0.5}), std::invalid_argument);
}

TEST_CASE("property: encoded targets are distributions") {
  Rng rng(7001);
  for (int trial = 0; trial < 200; ++trial) {
    const double lo = rng.uniform(-10.0, 5.0);
    const double hi = lo + rng.uniform(0.1, 20.0);
    const int k = 2 + static_cast<int>(rng.below(255));
    const BinGrid g = make_grid(lo, hi, k);
    const EncodeConfig cfg = make_encode_config(g, rng.uniform(0.1, 3.0));
    const double e = rng.uniform(lo - 0.2 * (hi - lo), hi + 0.2 * (hi - lo));
    const TargetHistogram t = encode_target(e, cfg, g);
    double sum = 0.0;
    for (double p : t.probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("property: decoded expectation is monotone in the label") {
  Rng rng(7002);
  for (int trial = 0; trial < 200; ++trial) {
    const double lo = rng.uniform(-5.0, 0.0);
    const double hi = lo + rng.uniform(0.5, 10.0);
    const int k = 8 + static_cast<int>(rng.below(120));
    const BinGrid g = make_grid(lo, hi, k);
    const EncodeConfig cfg = make_encode_config(g, rng.uniform(0.2, 2.0));
    const double e1 = rng.uniform(lo, hi);
    const double e2 = e1 + rng.uniform(0.0, hi - e1);
    const double d1 = decode_expectation(encode_target(e1, cfg, g).probs, g);
    const double d2 = decode_expectation(encode_target(e2, cfg, g).probs, g);
    CHECK(d2 >= d1 - 1e-12);
    CHECK(d1 >= g.lo);
    CHECK(d1 <= g.hi);
  }
}

TEST_CASE("property: round trip in the central 80% with sigma in [w/2, w]") {
  // Below sigma ~ w/2 the decode quantizes toward bin centers and the
  // round-trip error grows toward w/2, so the 1e-4-of-range bound only
  // holds for smoothing on the scale of a bin.
  Rng rng(7003);
  for (int trial = 0; trial < 1000; ++trial) {
    const double lo = rng.uniform(-8.0, 2.0);
    const double hi = lo + rng.uniform(0.5, 16.0);
    const int k = 64 + static_cast<int>(rng.below(193));
    const BinGrid g = make_grid(lo, hi, k);
    const EncodeConfig cfg = make_encode_config(g, rng.uniform(0.5, 1.0));
    const double margin = 0.1 * (hi - lo);
    const double e = rng.uniform(lo + margin, hi - margin);
    const double decoded = decode_expectation(encode_target(e, cfg, g).probs, g);
    CHECK(std::abs(decoded - e) <= 1e-4 * (hi - lo));
  }
}

TEST_CASE("property: encode matches the per-bin quadrature oracle") {
  Rng rng(7004);
  for (int trial = 0; trial < 100; ++trial) {
    const double lo = rng.uniform(-6.0, 2.0);
    const double hi = lo + rng.uniform(0.5, 12.0);
    const int k = 8 + static_cast<int>(rng.below(121));
    const BinGrid g = make_grid(lo, hi, k);
    const double mult = rng.uniform(0.25, 2.5);
    const EncodeConfig cfg = make_encode_config(g, mult);
    const double e = rng.uniform(lo, hi);
    const TargetHistogram t = encode_target(e, cfg, g);
    const std::vector<double> expected = oracle::quadrature_encode(e, cfg.sigma, g);
    for (int i = 0; i < k; ++i) {
      CHECK(std::abs(t.probs[i] - expected[i]) < 1e-9);
    }
  }
}

TEST_CASE("property: target entropy is nondecreasing in sigma at the midpoint") {
  const BinGrid g = make_grid(-3.0, 3.0, 64);
  const double mid = 0.0;
  double prev = -1.0;
  for (double mult : {0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    const double h = entropy(encode_target(mid, make_encode_config(g, mult), g).probs);
    CHECK(h >= prev - 1e-12);
    CHECK(h <= std::log(64.0) + 1e-12);
    prev = h;
  }
}

#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "histloss/codec.hpp"
#include "histloss/loss.hpp"
#include "histloss/model.hpp"
#include "histloss/rng.hpp"
#include "histloss/toy_system.hpp"
#include "oracles.hpp"

using namespace histloss;

namespace {

Configuration small_cluster(Rng& rng, int n) {
  Configuration c;
  c.species.resize(n);
  for (int i = 0; i < n; ++i) {
    c.species[i] = static_cast<int>(rng.below(3));
  }
  while (true) {
    c.positions.clear();
    for (int i = 0; i < n; ++i) {
      c.positions.push_back(
          {rng.uniform(0.0, 4.0 + n), rng.uniform(0.0, 4.0 + n), rng.uniform(0.0, 4.0 + n)});
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double r2 = 0.0;
        for (int d = 0; d < 3; ++d) {
          r2 += (c.positions[i][d] - c.positions[j][d]) * (c.positions[i][d] - c.positions[j][d]);
        }
        if (r2 < 4.0) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      return c;
    }
  }
}

// Flat view over all parameter blocks, for finite-difference probes.
std::vector<double*> flat_params(NetParams& p) {
  std::vector<double*> out;
  p.for_each([&out](const char*, std::vector<double>& v) {
    for (double& x : v) {
      out.push_back(&x);
    }
  });
  return out;
}

std::vector<double> flat_copy(const NetParams& p) {
  std::vector<double> out;
  p.for_each([&out](const char*, const std::vector<double>& v) {
    out.insert(out.end(), v.begin(), v.end());
  });
  return out;
}

}  // namespace

TEST_CASE("featurize basics and invariance") {
  DescriptorSpec spec;
  spec.max_atoms = 4;

  Configuration pair;
  pair.positions = {{1.0, 2.0, 3.0}, {1.0, 2.0, 5.5}};
  pair.species = {0, 2};
  const Descriptor d = featurize(pair, spec);
  CHECK(d.n_atoms == 2);
  CHECK(d.energy_features[0] == doctest::Approx(1.0 / 2.5).epsilon(1e-15));
  for (int i = 1; i < spec.max_pairs(); ++i) {
    CHECK(d.energy_features[i] == 0.0);
  }
  CHECK(d.energy_features[spec.max_pairs() + 0] == 1.0);
  CHECK(d.energy_features[spec.max_pairs() + 1] == 0.0);
  CHECK(d.energy_features[spec.max_pairs() + 2] == 1.0);

  // Deterministic.
  CHECK(featurize(pair, spec).energy_features == d.energy_features);
  CHECK(featurize(pair, spec).atom_blocks == d.atom_blocks);

  Rng rng(6001);
  for (int trial = 0; trial < 10; ++trial) {
    const Configuration c = small_cluster(rng, 4);
    const Descriptor base = featurize(c, spec);

    Configuration shifted = c;
    for (auto& p : shifted.positions) {
      p[0] += 11.25;
      p[1] -= 3.5;
      p[2] += 0.75;
    }
    const Descriptor dt = featurize(shifted, spec);
    for (std::size_t i = 0; i < base.energy_features.size(); ++i) {
      CHECK(std::abs(dt.energy_features[i] - base.energy_features[i]) < 1e-12);
    }

    const oracle::Mat3 rot = oracle::random_rotation(rng);
    Configuration rotated = c;
    for (auto& p : rotated.positions) {
      p = oracle::apply(rot, p);
    }
    const Descriptor dr = featurize(rotated, spec);
    for (std::size_t i = 0; i < base.energy_features.size(); ++i) {
      CHECK(std::abs(dr.energy_features[i] - base.energy_features[i]) < 1e-10);
    }
  }
}

TEST_CASE("featurize rejects oversized configurations") {
  DescriptorSpec spec;
  spec.max_atoms = 3;
  Rng rng(6002);
  CHECK_THROWS_AS(featurize(small_cluster(rng, 4), spec), std::invalid_argument);
}

TEST_CASE("zero-initialized head predicts the grid midpoint") {
  ModelConfig mc;
  mc.desc.max_atoms = 4;
  mc.width = 16;
  mc.force_width = 8;
  mc.energy_outputs = 32;
  const ModelState model = init_model(mc);

  Rng rng(6003);
  const Descriptor d = featurize(small_cluster(rng, 3), mc.desc);
  const Prediction out = forward(model, d);
  for (double z : out.energy_out) {
    CHECK(z == 0.0);
  }
  const BinGrid grid = make_grid(-1.5, 2.5, 32);
  const std::vector<double> probs = softmax_with_temperature(out.energy_out, 2.0);
  CHECK(decode_expectation(probs, grid) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward is deterministic under a fixed seed") {
  ModelConfig mc;
  mc.desc.max_atoms = 5;
  mc.width = 24;
  mc.force_width = 12;
  mc.energy_outputs = 8;
  mc.init_seed = 99;

  Rng rng(6004);
  const Descriptor d = featurize(small_cluster(rng, 4), mc.desc);
  const Prediction a = forward(init_model(mc), d);
  const Prediction b = forward(init_model(mc), d);
  CHECK(a.energy_out == b.energy_out);
  CHECK(a.forces == b.forces);
}

TEST_CASE("baseline and classification modes share trunk bits") {
  ModelConfig mc;
  mc.desc.max_atoms = 4;
  mc.width = 16;
  mc.force_width = 8;
  mc.init_seed = 1234;
  mc.energy_outputs = 1;
  const std::uint64_t baseline = trunk_hash(init_model(mc));
  mc.energy_outputs = 64;
  CHECK(trunk_hash(init_model(mc)) == baseline);
  mc.init_seed = 1235;
  CHECK(trunk_hash(init_model(mc)) != baseline);
}

TEST_CASE("backward zero upstream gives zero gradients") {
  ModelConfig mc;
  mc.desc.max_atoms = 4;
  mc.width = 8;
  mc.force_width = 6;
  mc.energy_outputs = 5;
  const ModelState model = init_model(mc);
  Rng rng(6005);
  const Descriptor d = featurize(small_cluster(rng, 3), mc.desc);
  ForwardTrace trace;
  forward_trace(model, d, trace);

  NetParams grads = zeros_like(model.params);
  backward(model, d, trace, std::vector<double>(5, 0.0), std::vector<double>(9, 0.0), grads);
  for (double g : flat_copy(grads)) {
    CHECK(g == 0.0);
  }
}

TEST_CASE("energy-head bias gradient is the upstream gradient") {
  ModelConfig mc;
  mc.desc.max_atoms = 4;
  mc.width = 8;
  mc.force_width = 6;
  mc.energy_outputs = 5;
  ModelState model = init_model(mc);
  Rng rng(6006);
  // Give the head nonzero weights so the trace is not at the zero fixture.
  for (double& w : model.params.we) {
    w = rng.uniform(-0.5, 0.5);
  }
  const Descriptor d = featurize(small_cluster(rng, 3), mc.desc);
  ForwardTrace trace;
  forward_trace(model, d, trace);

  const std::vector<double> target{0.1, 0.2, 0.3, 0.25, 0.15};
  const std::vector<double> upstream =
      cross_entropy_grad_logits(target, trace.out.energy_out, 2.0);
  NetParams grads = zeros_like(model.params);
  backward(model, d, trace, upstream, std::vector<double>(9, 0.0), grads);
  for (int i = 0; i < 5; ++i) {
    CHECK(grads.be[i] == doctest::Approx(upstream[i]).epsilon(1e-15));
  }
}

TEST_CASE("full-model gradient matches finite differences") {
  ModelConfig mc;
  mc.desc.max_atoms = 4;
  mc.width = 8;
  mc.force_width = 6;
  mc.energy_outputs = 5;
  mc.init_seed = 77;
  ModelState model = init_model(mc);
  Rng rng(6007);
  // Random energy head so the CE branch is exercised away from uniform.
  for (double& w : model.params.we) {
    w = rng.uniform(-0.4, 0.4);
  }
  for (double& b : model.params.be) {
    b = rng.uniform(-0.1, 0.1);
  }

  const LossConfig loss_cfg;
  const BinGrid grid = make_grid(-2.0, 2.0, 5);
  const EncodeConfig enc = make_encode_config(grid, 0.75);

  std::vector<Sample> batch;
  std::vector<Descriptor> descs;
  std::vector<TargetHistogram> targets;
  for (int i = 0; i < 5; ++i) {
    Sample s;
    s.config = small_cluster(rng, 2 + static_cast<int>(rng.below(3)));
    s.per_atom_energy = lj_energy(s.config) / s.config.n_atoms();
    s.forces = lj_forces(s.config);
    descs.push_back(featurize(s.config, mc.desc));
    targets.push_back(encode_target(s.per_atom_energy, enc, grid));
    batch.push_back(std::move(s));
  }

  auto total_loss = [&](const ModelState& m) {
    double energy_term = 0.0;
    double force_term = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Prediction out = forward(m, descs[i]);
      energy_term += cross_entropy(targets[i].probs,
                                   softmax_with_temperature(out.energy_out,
                                                            loss_cfg.temperature)) /
                     batch.size();
      std::vector<double> f_true;
      for (const auto& f : batch[i].forces) {
        f_true.insert(f_true.end(), f.begin(), f.end());
      }
      force_term += force_mae_loss(f_true, out.forces) / batch.size();
    }
    return combined_loss(energy_term, force_term, loss_cfg);
  };

  // Analytic batch gradient.
  NetParams grads = zeros_like(model.params);
  ForwardTrace trace;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_trace(model, descs[i], trace);
    std::vector<double> d_energy =
        cross_entropy_grad_logits(targets[i].probs, trace.out.energy_out, loss_cfg.temperature);
    for (double& g : d_energy) {
      g *= loss_cfg.energy_weight / batch.size();
    }
    std::vector<double> f_true;
    for (const auto& f : batch[i].forces) {
      f_true.insert(f_true.end(), f.begin(), f.end());
    }
    std::vector<double> d_forces = force_mae_grad(f_true, trace.out.forces);
    for (double& g : d_forces) {
      g *= loss_cfg.force_weight / batch.size();
    }
    backward(model, descs[i], trace, d_energy, d_forces, grads);
  }

  const std::vector<double*> params = flat_params(model.params);
  const std::vector<double> analytic = flat_copy(grads);
  REQUIRE(params.size() == analytic.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i];
    const double saved = *p;
    const double fd = oracle::central_diff(
        [&](double x) {
          *p = x;
          const double loss = total_loss(model);
          *p = saved;
          return loss;
        },
        saved, 1e-5);
    const double abs_err = std::abs(analytic[i] - fd);
    const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(fd), 1e-7});
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("learning rate schedule closed form") {
  OptimizerConfig cfg;
  cfg.lr = 1e-3;
  cfg.warmup_steps = 100;
  cfg.total_steps = 5000;
  cfg.lr_floor_frac = 0.01;
  CHECK(std::abs(lr_at(cfg, 0) - 1e-5) < 1e-12);
  CHECK(std::abs(lr_at(cfg, 99) - 1e-3) < 1e-12);
  CHECK(std::abs(lr_at(cfg, 100) - 1e-3) < 1e-12);
  CHECK(std::abs(lr_at(cfg, 5000) - 1e-5) < 1e-12);
  CHECK(std::abs(lr_at(cfg, 9000) - 1e-5) < 1e-12);
  // Halfway through the cosine leg.
  CHECK(std::abs(lr_at(cfg, 2550) - 0.5 * (1e-3 + 1e-5)) < 1e-12);
  for (long t = 1; t < 100; ++t) {
    CHECK(lr_at(cfg, t) >= lr_at(cfg, t - 1));
  }
  for (long t = 101; t <= 5000; ++t) {
    CHECK(lr_at(cfg, t) <= lr_at(cfg, t - 1));
  }
}

TEST_CASE("optimizer fixed points and decay") {
  ModelConfig mc;
  mc.desc.max_atoms = 2;
  mc.width = 4;
  mc.force_width = 3;
  mc.energy_outputs = 2;
  OptimizerConfig opt;
  opt.lr = 0.125;
  opt.warmup_steps = 0;
  opt.total_steps = 10;
  opt.lr_floor_frac = 1.0;  // constant LR
  opt.weight_decay = 0.0;

  ModelState state = init_model(mc);
  const std::vector<double> before = flat_copy(state.params);
  const NetParams zero_grads = zeros_like(state.params);
  optimizer_step(state, zero_grads, opt);
  CHECK(flat_copy(state.params) == before);
  CHECK(state.step == 1);

  // Decoupled decay with zero gradients scales every parameter by (1 - lr * wd).
  opt.weight_decay = 0.04;
  ModelState decayed = init_model(mc);
  optimizer_step(decayed, zero_grads, opt);
  const std::vector<double> after = flat_copy(decayed.params);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i] == doctest::Approx(before[i] * (1.0 - 0.125 * 0.04)).epsilon(1e-15));
  }
}

TEST_CASE("optimizer rejects non-finite gradients by block name") {
  ModelConfig mc;
  mc.desc.max_atoms = 2;
  mc.width = 4;
  mc.force_width = 3;
  mc.energy_outputs = 2;
  ModelState state = init_model(mc);
  NetParams grads = zeros_like(state.params);
  grads.w2[1] = std::nan("");
  OptimizerConfig opt;
  try {
    optimizer_step(state, grads, opt);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("w2") != std::string::npos);
  }
}

TEST_CASE("adamw descends a quadratic monotonically") {
  // Single effective parameter: drive be[0] toward 3 under f(x) = (x - 3)^2.
  ModelConfig mc;
  mc.desc.max_atoms = 2;
  mc.width = 1;
  mc.force_width = 1;
  mc.energy_outputs = 1;
  ModelState state = init_model(mc);
  OptimizerConfig opt;
  opt.lr = 0.01;
  opt.weight_decay = 0.0;
  opt.warmup_steps = 10;
  opt.total_steps = 100;
  opt.lr_floor_frac = 0.5;

  auto objective = [&] {
    const double x = state.params.be[0];
    return (x - 3.0) * (x - 3.0);
  };
  NetParams grads = zeros_like(state.params);
  double prev = objective();
  for (int step = 0; step < 100; ++step) {
    zero(grads);
    grads.be[0] = 2.0 * (state.params.be[0] - 3.0);
    optimizer_step(state, grads, opt);
    const double now = objective();
    if (step >= opt.warmup_steps) {
      CHECK(now < prev);
    }
    prev = now;
  }
  CHECK(prev < 8.0);  // started at 9
}

TEST_CASE("local output perturbation stays bounded") {
  ModelConfig mc;
  mc.desc.max_atoms = 4;
  mc.width = 16;
  mc.force_width = 8;
  mc.energy_outputs = 8;
  const ModelState model = init_model(mc);
  Rng rng(6008);
  const Descriptor base = featurize(small_cluster(rng, 3), mc.desc);
  const Prediction out0 = forward(model, base);

  for (int trial = 0; trial < 20; ++trial) {
    Descriptor perturbed = base;
    double delta_sq = 0.0;
    for (double& x : perturbed.energy_features) {
      const double d = rng.uniform(-1e-6, 1e-6);
      x += d;
      delta_sq += d * d;
    }
    const Prediction out = forward(model, perturbed);
    double out_sq = 0.0;
    for (std::size_t i = 0; i < out.energy_out.size(); ++i) {
      out_sq += (out.energy_out[i] - out0.energy_out[i]) * (out.energy_out[i] - out0.energy_out[i]);
    }
    const double ratio = std::sqrt(out_sq) / std::sqrt(delta_sq);
    CHECK(std::isfinite(ratio));
    CHECK(ratio < 1e3);  // local Lipschitz stays modest for a tanh net this size
  }
}

#include "histloss/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "histloss/rng.hpp"
#include "histloss/util.hpp"

namespace histloss {

namespace {

// y = W x + b, W row-major (out x in).
void affine(const std::vector<double>& w, const std::vector<double>& b, const double* x,
            double* y, int out, int in) {
  for (int o = 0; o < out; ++o) {
    const double* row = w.data() + static_cast<std::size_t>(o) * in;
    double s = b[o];
    for (int i = 0; i < in; ++i) {
      s += row[i] * x[i];
    }
    y[o] = s;
  }
}

// Accumulate dW += dy x^T, db += dy, dx += W^T dy.
void affine_backward(const std::vector<double>& w, const double* x, const double* dy,
                     std::vector<double>& dw, std::vector<double>& db, double* dx, int out,
                     int in) {
  for (int o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) {
      continue;
    }
    const double* row = w.data() + static_cast<std::size_t>(o) * in;
    double* drow = dw.data() + static_cast<std::size_t>(o) * in;
    db[o] += g;
    for (int i = 0; i < in; ++i) {
      drow[i] += g * x[i];
      if (dx != nullptr) {
        dx[i] += g * row[i];
      }
    }
  }
}

void tanh_inplace(double* x, int n) {
  for (int i = 0; i < n; ++i) {
    x[i] = std::tanh(x[i]);
  }
}

void check_dims(bool ok, const char* what) {
  if (!ok) {
    throw std::invalid_argument(std::string("model: dimension mismatch in ") + what);
  }
}

}  // namespace

Descriptor featurize(const Configuration& config, const DescriptorSpec& spec) {
  const int n = config.n_atoms();
  if (n < 2) {
    throw std::invalid_argument("featurize: need at least 2 atoms");
  }
  if (n > spec.max_atoms) {
    throw std::invalid_argument("featurize: " + std::to_string(n) + " atoms exceeds max of " +
                                std::to_string(spec.max_atoms));
  }
  if (static_cast<int>(config.species.size()) != n) {
    throw std::invalid_argument("featurize: species/position count mismatch");
  }

  Descriptor d;
  d.n_atoms = n;
  d.energy_features.assign(spec.energy_dim(), 0.0);
  d.atom_blocks.assign(static_cast<std::size_t>(n) * spec.block_dim(), 0.0);

  // Global invariant features: sorted inverse pair distances, then species counts.
  std::vector<double> inv_r;
  inv_r.reserve(spec.max_pairs());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double r2 = 0.0;
      for (int dd = 0; dd < 3; ++dd) {
        const double diff = config.positions[i][dd] - config.positions[j][dd];
        r2 += diff * diff;
      }
      inv_r.push_back(1.0 / std::sqrt(r2));
    }
  }
  std::sort(inv_r.begin(), inv_r.end(), std::greater<>());
  std::copy(inv_r.begin(), inv_r.end(), d.energy_features.begin());
  for (int i = 0; i < n; ++i) {
    if (config.species[i] < 0 || config.species[i] >= spec.n_species) {
      throw std::invalid_argument("featurize: species index out of range");
    }
    d.energy_features[spec.max_pairs() + config.species[i]] += 1.0;
  }

  // Per-atom blocks: neighbors nearest-first as (1/r, unit displacement,
  // neighbor species one-hot), then the atom's own species one-hot.
  std::vector<std::pair<double, int>> neighbors;  // (distance, index)
  for (int a = 0; a < n; ++a) {
    neighbors.clear();
    for (int j = 0; j < n; ++j) {
      if (j == a) {
        continue;
      }
      double r2 = 0.0;
      for (int dd = 0; dd < 3; ++dd) {
        const double diff = config.positions[a][dd] - config.positions[j][dd];
        r2 += diff * diff;
      }
      neighbors.emplace_back(std::sqrt(r2), j);
    }
    std::sort(neighbors.begin(), neighbors.end());
    double* block = d.atom_blocks.data() + static_cast<std::size_t>(a) * spec.block_dim();
    for (std::size_t slot = 0; slot < neighbors.size(); ++slot) {
      const auto [r, j] = neighbors[slot];
      double* f = block + slot * spec.slot_dim();
      f[0] = 1.0 / r;
      for (int dd = 0; dd < 3; ++dd) {
        f[1 + dd] = (config.positions[a][dd] - config.positions[j][dd]) / r;
      }
      f[4 + config.species[j]] = 1.0;
    }
    block[(spec.max_atoms - 1) * spec.slot_dim() + config.species[a]] = 1.0;
  }
  return d;
}

ModelState init_model(const ModelConfig& cfg) {
  if (cfg.energy_outputs < 1) {
    throw std::invalid_argument("model: energy_outputs must be >= 1");
  }
  if (cfg.width < 1 || cfg.force_width < 1) {
    throw std::invalid_argument("model: widths must be positive");
  }
  const int dg = cfg.desc.energy_dim();
  const int df = cfg.desc.block_dim();
  const int h = cfg.width;
  const int hf = cfg.force_width;

  ModelState state;
  state.cfg = cfg;
  Rng rng(cfg.init_seed);
  auto fan_in_uniform = [&rng](std::vector<double>& w, int out, int in) {
    w.resize(static_cast<std::size_t>(out) * in);
    const double bound = std::sqrt(3.0 / in);
    for (double& x : w) {
      x = rng.uniform(-bound, bound);
    }
  };

  // Draw order matters: trunk and force head first so their bits are
  // independent of energy_outputs, then the zero energy head.
  fan_in_uniform(state.params.w1, h, dg);
  state.params.b1.assign(h, 0.0);
  fan_in_uniform(state.params.w2, h, h);
  state.params.b2.assign(h, 0.0);
  fan_in_uniform(state.params.wf1, hf, h + df);
  state.params.bf1.assign(hf, 0.0);
  fan_in_uniform(state.params.wf2, 3, hf);
  state.params.bf2.assign(3, 0.0);
  state.params.we.assign(static_cast<std::size_t>(cfg.energy_outputs) * h, 0.0);
  state.params.be.assign(cfg.energy_outputs, 0.0);

  state.m = zeros_like(state.params);
  state.v = zeros_like(state.params);
  return state;
}

std::uint64_t trunk_hash(const ModelState& state) {
  std::uint64_t h = fnv1a(state.params.w1);
  h = fnv1a(state.params.b1, h);
  h = fnv1a(state.params.w2, h);
  h = fnv1a(state.params.b2, h);
  return h;
}

void forward_trace(const ModelState& state, const Descriptor& d, ForwardTrace& trace) {
  const ModelConfig& cfg = state.cfg;
  const int dg = cfg.desc.energy_dim();
  const int df = cfg.desc.block_dim();
  const int h = cfg.width;
  const int hf = cfg.force_width;
  const int n = d.n_atoms;
  check_dims(static_cast<int>(d.energy_features.size()) == dg, "energy features");
  check_dims(d.atom_blocks.size() == static_cast<std::size_t>(n) * df, "atom blocks");

  trace.h1.resize(h);
  trace.h2.resize(h);
  trace.hidden.resize(static_cast<std::size_t>(n) * hf);
  trace.out.energy_out.resize(cfg.energy_outputs);
  trace.out.forces.resize(static_cast<std::size_t>(3) * n);

  affine(state.params.w1, state.params.b1, d.energy_features.data(), trace.h1.data(), h, dg);
  tanh_inplace(trace.h1.data(), h);
  affine(state.params.w2, state.params.b2, trace.h1.data(), trace.h2.data(), h, h);
  tanh_inplace(trace.h2.data(), h);
  affine(state.params.we, state.params.be, trace.h2.data(), trace.out.energy_out.data(),
         cfg.energy_outputs, h);

  // Force head input is [h2; block_a]; evaluate the two halves separately to
  // avoid materializing the concatenation.
  std::vector<double> x(static_cast<std::size_t>(h) + df);
  std::copy(trace.h2.begin(), trace.h2.end(), x.begin());
  for (int a = 0; a < n; ++a) {
    const double* block = d.atom_blocks.data() + static_cast<std::size_t>(a) * df;
    std::copy(block, block + df, x.begin() + h);
    double* u = trace.hidden.data() + static_cast<std::size_t>(a) * hf;
    affine(state.params.wf1, state.params.bf1, x.data(), u, hf, h + df);
    tanh_inplace(u, hf);
    affine(state.params.wf2, state.params.bf2, u, trace.out.forces.data() + 3 * a, 3, hf);
  }
}

Prediction forward(const ModelState& state, const Descriptor& d) {
  ForwardTrace trace;
  forward_trace(state, d, trace);
  return std::move(trace.out);
}

void backward(const ModelState& state, const Descriptor& d, const ForwardTrace& trace,
              std::span<const double> d_energy_out, std::span<const double> d_forces,
              NetParams& grads) {
  const ModelConfig& cfg = state.cfg;
  const int dg = cfg.desc.energy_dim();
  const int df = cfg.desc.block_dim();
  const int h = cfg.width;
  const int hf = cfg.force_width;
  const int n = d.n_atoms;
  check_dims(static_cast<int>(d_energy_out.size()) == cfg.energy_outputs, "energy upstream");
  check_dims(d_forces.size() == static_cast<std::size_t>(3) * n, "force upstream");

  std::vector<double> dh2(h, 0.0);
  affine_backward(state.params.we, trace.h2.data(), d_energy_out.data(), grads.we, grads.be,
                  dh2.data(), cfg.energy_outputs, h);

  std::vector<double> x(static_cast<std::size_t>(h) + df);
  std::vector<double> dx(static_cast<std::size_t>(h) + df);
  std::vector<double> du(hf);
  std::copy(trace.h2.begin(), trace.h2.end(), x.begin());
  for (int a = 0; a < n; ++a) {
    const double* block = d.atom_blocks.data() + static_cast<std::size_t>(a) * df;
    std::copy(block, block + df, x.begin() + h);
    const double* u = trace.hidden.data() + static_cast<std::size_t>(a) * hf;

    std::fill(du.begin(), du.end(), 0.0);
    affine_backward(state.params.wf2, u, d_forces.data() + 3 * a, grads.wf2, grads.bf2, du.data(),
                    3, hf);
    for (int i = 0; i < hf; ++i) {
      du[i] *= 1.0 - u[i] * u[i];
    }
    std::fill(dx.begin(), dx.end(), 0.0);
    affine_backward(state.params.wf1, x.data(), du.data(), grads.wf1, grads.bf1, dx.data(), hf,
                    h + df);
    for (int i = 0; i < h; ++i) {
      dh2[i] += dx[i];  // the block half of dx is an input, not a parameter
    }
  }

  for (int i = 0; i < h; ++i) {
    dh2[i] *= 1.0 - trace.h2[i] * trace.h2[i];
  }
  std::vector<double> dh1(h, 0.0);
  affine_backward(state.params.w2, trace.h1.data(), dh2.data(), grads.w2, grads.b2, dh1.data(), h,
                  h);
  for (int i = 0; i < h; ++i) {
    dh1[i] *= 1.0 - trace.h1[i] * trace.h1[i];
  }
  affine_backward(state.params.w1, d.energy_features.data(), dh1.data(), grads.w1, grads.b1,
                  nullptr, h, dg);
}

NetParams zeros_like(const NetParams& p) {
  NetParams z;
  auto zero_of = [](const std::vector<double>& src) { return std::vector<double>(src.size()); };
  z.w1 = zero_of(p.w1), z.b1 = zero_of(p.b1);
  z.w2 = zero_of(p.w2), z.b2 = zero_of(p.b2);
  z.we = zero_of(p.we), z.be = zero_of(p.be);
  z.wf1 = zero_of(p.wf1), z.bf1 = zero_of(p.bf1);
  z.wf2 = zero_of(p.wf2), z.bf2 = zero_of(p.bf2);
  return z;
}

void zero(NetParams& p) {
  p.for_each([](const char*, std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0) || weight_decay < 0.0) {
    throw std::invalid_argument("optimizer: need lr >= 0 and weight_decay >= 0");
  }
  if (warmup_steps < 0 || total_steps <= warmup_steps) {
    throw std::invalid_argument("optimizer: need 0 <= warmup_steps < total_steps");
  }
  if (lr_floor_frac < 0.0 || lr_floor_frac > 1.0) {
    throw std::invalid_argument("optimizer: lr_floor_frac must lie in [0, 1]");
  }
  if (batch_size < 1 || !(clip_norm > 0.0)) {
    throw std::invalid_argument("optimizer: need batch_size >= 1 and clip_norm > 0");
  }
}

double lr_at(const OptimizerConfig& cfg, long step) {
  if (step < cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
  }
  const double floor = cfg.lr_floor_frac * cfg.lr;
  if (step >= cfg.total_steps) {
    return floor;
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double global_grad_norm(const NetParams& grads) {
  double sq = 0.0;
  grads.for_each([&sq](const char*, const std::vector<double>& g) {
    for (double x : g) {
      sq += x * x;
    }
  });
  return std::sqrt(sq);
}

void optimizer_step(ModelState& state, const NetParams& grads, const OptimizerConfig& cfg) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  grads.for_each([](const char* name, const std::vector<double>& g) {
    if (!all_finite(g)) {
      throw std::runtime_error(std::string("optimizer_step: non-finite gradient in block ") +
                               name);
    }
  });

  const double norm = global_grad_norm(grads);
  const double clip_scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
  const double eta = lr_at(cfg, state.step);
  const long t = state.step + 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));

  auto update = [&](std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                    const std::vector<double>& g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip_scale;
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= eta * cfg.weight_decay * w[i];  // decoupled decay
      w[i] -= eta * m_hat / (std::sqrt(v_hat) + kEps);
    }
  };
  update(state.params.w1, state.m.w1, state.v.w1, grads.w1);
  update(state.params.b1, state.m.b1, state.v.b1, grads.b1);
  update(state.params.w2, state.m.w2, state.v.w2, grads.w2);
  update(state.params.b2, state.m.b2, state.v.b2, grads.b2);
  update(state.params.we, state.m.we, state.v.we, grads.we);
  update(state.params.be, state.m.be, state.v.be, grads.be);
  update(state.params.wf1, state.m.wf1, state.v.wf1, grads.wf1);
  update(state.params.bf1, state.m.bf1, state.v.bf1, grads.bf1);
  update(state.params.wf2, state.m.wf2, state.v.wf2, grads.wf2);
  update(state.params.bf2, state.m.bf2, state.v.bf2, grads.bf2);
  state.step = t;

  state.params.for_each([](const char* name, const std::vector<double>& w) {
    if (!all_finite(w)) {
      throw std::runtime_error(std::string("optimizer_step: non-finite parameter in block ") +
                               name);
    }
  });
}

}  // namespace histloss

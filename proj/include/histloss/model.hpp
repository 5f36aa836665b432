#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "histloss/toy_system.hpp"

namespace histloss {

struct DescriptorSpec {
  int max_atoms = 8;
  int n_species = 3;

  int max_pairs() const { return max_atoms * (max_atoms - 1) / 2; }
  // Rotation/translation-invariant global features: sorted inverse pair
  // distances (descending, zero-padded) plus the species count histogram.
  int energy_dim() const { return max_pairs() + n_species; }
  // Per-atom block for the force head: per neighbor slot, nearest first,
  // (1/r, unit displacement xyz, neighbor species one-hot), then the atom's
  // own species one-hot. Directions make direct force prediction learnable;
  // they are not rotation-invariant by design.
  int slot_dim() const { return 4 + n_species; }
  int block_dim() const { return (max_atoms - 1) * slot_dim() + n_species; }
};

struct Descriptor {
  std::vector<double> energy_features;  // energy_dim
  std::vector<double> atom_blocks;      // n_atoms * block_dim
  int n_atoms = 0;
};

// Throws std::invalid_argument if the configuration exceeds max_atoms.
Descriptor featurize(const Configuration& config, const DescriptorSpec& spec);

// Trunk: two tanh layers of `width`. Energy head: linear to
// `energy_outputs` (k logits, or 1 for the scalar baseline), zero-initialized
// so training starts from a uniform distribution. Force head: per-atom MLP
// over [trunk hidden; atom block] with one tanh layer of `force_width`.
struct ModelConfig {
  DescriptorSpec desc;
  int width = 128;
  int force_width = 64;
  int energy_outputs = 128;  // >= 2 in classification mode, exactly 1 in baseline mode
  std::uint64_t init_seed = 2025;
};

// Named parameter blocks; moments share the same shapes.
struct NetParams {
  std::vector<double> w1, b1;    // width x energy_dim, width
  std::vector<double> w2, b2;    // width x width, width
  std::vector<double> we, be;    // energy_outputs x width, energy_outputs
  std::vector<double> wf1, bf1;  // force_width x (width + block_dim), force_width
  std::vector<double> wf2, bf2;  // 3 x force_width, 3

  template <typename F>
  void for_each(F&& f) {
    f("w1", w1), f("b1", b1), f("w2", w2), f("b2", b2);
    f("we", we), f("be", be);
    f("wf1", wf1), f("bf1", bf1), f("wf2", wf2), f("bf2", bf2);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("w1", w1), f("b1", b1), f("w2", w2), f("b2", b2);
    f("we", we), f("be", be);
    f("wf1", wf1), f("bf1", bf1), f("wf2", wf2), f("bf2", bf2);
  }
};

struct ModelState {
  ModelConfig cfg;
  NetParams params;
  NetParams m, v;  // AdamW first/second moments
  long step = 0;
};

// Fan-in-scaled uniform trunk and force head; zero energy head. The trunk
// and force head draws do not depend on energy_outputs, so baseline and
// classification modes share identical trunk bits under the same seed.
ModelState init_model(const ModelConfig& cfg);

// FNV-1a over the trunk blocks (w1, b1, w2, b2).
std::uint64_t trunk_hash(const ModelState& state);

struct Prediction {
  std::vector<double> energy_out;  // k logits or a single scalar
  std::vector<double> forces;      // 3 * n_atoms
};

// Activations kept for the backward pass.
struct ForwardTrace {
  std::vector<double> h1, h2;   // trunk activations
  std::vector<double> hidden;   // n_atoms * force_width, force-head activations
  Prediction out;
};

void forward_trace(const ModelState& state, const Descriptor& d, ForwardTrace& trace);
Prediction forward(const ModelState& state, const Descriptor& d);

// Accumulates exact reverse-mode gradients into `grads` (shapes must match;
// call zero() first for a fresh gradient).
void backward(const ModelState& state, const Descriptor& d, const ForwardTrace& trace,
              std::span<const double> d_energy_out, std::span<const double> d_forces,
              NetParams& grads);

NetParams zeros_like(const NetParams& p);
void zero(NetParams& p);

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  int warmup_steps = 100;
  int total_steps = 5000;
  double lr_floor_frac = 0.01;
  int batch_size = 32;
  double clip_norm = 1.0;

  void validate() const;
};

// Linear warmup to the base rate, cosine decay to lr_floor_frac * lr at
// total_steps, flat floor afterwards.
double lr_at(const OptimizerConfig& cfg, long step);

double global_grad_norm(const NetParams& grads);

// One AdamW update: gradients clipped by global norm, decoupled weight decay,
// bias-corrected moments. Throws std::runtime_error on non-finite gradients
// (naming the offending block) or non-finite parameters after the update.
void optimizer_step(ModelState& state, const NetParams& grads, const OptimizerConfig& cfg);

}  // namespace histloss

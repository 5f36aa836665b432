#pragma once

#include <span>
#include <vector>

namespace histloss {

struct LossConfig {
  double temperature = 2.0;
  double energy_weight = 0.7;
  double force_weight = 0.3;

  // Throws std::invalid_argument if temperature <= 0, a weight is negative,
  // or the weights do not sum to 1 within 1e-12.
  void validate() const;
};

// p_i = exp(z_i / tau) / sum_j exp(z_j / tau), max-stabilized.
std::vector<double> softmax_with_temperature(std::span<const double> logits, double temperature);

// -sum_i target_i * ln(predicted_i), with predicted clamped to >= 1e-12
// inside the log only.
double cross_entropy(std::span<const double> target, std::span<const double> predicted);

// Gradient of cross_entropy(target, softmax_with_temperature(z, tau)) with
// respect to z: (softmax(z, tau) - target) / tau. Entries sum to zero.
std::vector<double> cross_entropy_grad_logits(std::span<const double> target,
                                              std::span<const double> logits, double temperature);

double mae_loss(double e, double e_hat);
// Subgradient of |e - e_hat| with respect to e_hat; sign(0) = 0.
double mae_grad(double e, double e_hat);

// Mean absolute error per component over a flat 3N force vector.
double force_mae_loss(std::span<const double> f, std::span<const double> f_hat);
std::vector<double> force_mae_grad(std::span<const double> f, std::span<const double> f_hat);

double combined_loss(double energy_loss, double force_loss, const LossConfig& cfg);

}  // namespace histloss

#include "histloss/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "histloss/util.hpp"

namespace histloss {

namespace {
constexpr double kLogClamp = 1e-12;

void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}
}  // namespace

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("loss config: temperature must be positive");
  }
  if (energy_weight < 0.0 || force_weight < 0.0) {
    throw std::invalid_argument("loss config: weights must be nonnegative");
  }
  if (std::abs(energy_weight + force_weight - 1.0) > 1e-12) {
    throw std::invalid_argument("loss config: energy_weight + force_weight must equal 1");
  }
}

std::vector<double> softmax_with_temperature(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("softmax: temperature must be positive and finite");
  }
  if (logits.empty()) {
    throw std::invalid_argument("softmax: empty logits");
  }
  if (!all_finite(logits)) {
    throw std::invalid_argument("softmax: non-finite logit");
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - zmax) / temperature);
    sum += p[i];
  }
  for (double& x : p) {
    x /= sum;
  }
  return p;
}

double cross_entropy(std::span<const double> target, std::span<const double> predicted) {
  check_same_length(target.size(), predicted.size(), "cross_entropy");
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] > 0.0) {
      loss -= target[i] * std::log(std::max(predicted[i], kLogClamp));
    }
  }
  return loss;
}

std::vector<double> cross_entropy_grad_logits(std::span<const double> target,
                                              std::span<const double> logits, double temperature) {
  check_same_length(target.size(), logits.size(), "cross_entropy_grad_logits");
  std::vector<double> grad = softmax_with_temperature(logits, temperature);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = (grad[i] - target[i]) / temperature;
  }
  return grad;
}

double mae_loss(double e, double e_hat) {
  if (!std::isfinite(e) || !std::isfinite(e_hat)) {
    throw std::invalid_argument("mae_loss: non-finite input");
  }
  return std::abs(e - e_hat);
}

double mae_grad(double e, double e_hat) {
  const double d = e_hat - e;
  return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
}

double force_mae_loss(std::span<const double> f, std::span<const double> f_hat) {
  check_same_length(f.size(), f_hat.size(), "force_mae_loss");
  if (f.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    sum += std::abs(f[i] - f_hat[i]);
  }
  return sum / static_cast<double>(f.size());
}

std::vector<double> force_mae_grad(std::span<const double> f, std::span<const double> f_hat) {
  check_same_length(f.size(), f_hat.size(), "force_mae_grad");
  std::vector<double> grad(f.size());
  const double scale = f.empty() ? 0.0 : 1.0 / static_cast<double>(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    grad[i] = scale * mae_grad(f[i], f_hat[i]);
  }
  return grad;
}

double combined_loss(double energy_loss, double force_loss, const LossConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(energy_loss) || !std::isfinite(force_loss)) {
    throw std::invalid_argument("combined_loss: non-finite loss term");
  }
  return cfg.energy_weight * energy_loss + cfg.force_weight * force_loss;
}

}  // namespace histloss

#include "petseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace petseg {
namespace {

void check_inputs(std::span<const double> probs,
                  std::span<const double> targets, std::int64_t batch,
                  std::int64_t voxels, std::span<double> grad) {
  const auto n = static_cast<std::size_t>(batch * voxels);
  if (batch < 1 || voxels < 1) {
    throw std::invalid_argument("loss: batch and voxels must be >= 1");
  }
  if (probs.size() != n || targets.size() != n) {
    throw std::invalid_argument("loss: shape mismatch");
  }
  if (!grad.empty() && grad.size() != n) {
    throw std::invalid_argument("loss: gradient shape mismatch");
  }
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("loss: probabilities outside [0,1]");
    }
  }
}

}  // namespace

std::string to_string(DiceMode mode) {
  return mode == DiceMode::kPerSample ? "per_sample" : "batch";
}

DiceMode parse_dice_mode(const std::string& name) {
  if (name == "per_sample") return DiceMode::kPerSample;
  if (name == "batch") return DiceMode::kBatch;
  throw std::runtime_error("unknown dice mode '" + name + "'");
}

void LossConfig::validate() const {
  if (smooth < 0.0 || ce_weight < 0.0 || dice_weight < 0.0) {
    throw std::invalid_argument("loss config: weights and smooth must be >= 0");
  }
  if (!(ce_weight + dice_weight > 0.0)) {
    throw std::invalid_argument("loss config: ce_weight + dice_weight == 0");
  }
}

double soft_dice_per_sample(std::span<const double> probs,
                            std::span<const double> targets,
                            std::int64_t batch, std::int64_t voxels,
                            double smooth, std::span<double> grad) {
  check_inputs(probs, targets, batch, voxels, grad);
  double dice_sum = 0.0;
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* p = probs.data() + b * voxels;
    const double* t = targets.data() + b * voxels;
    double inter = 0.0, p_sum = 0.0, t_sum = 0.0;
    for (std::int64_t v = 0; v < voxels; ++v) {
      inter += p[v] * t[v];
      p_sum += p[v];
      t_sum += t[v];
    }
    const double num = 2.0 * inter + smooth;
    const double den = p_sum + t_sum + smooth;
    if (den == 0.0) {
      // Empty target, empty prediction, smooth 0: perfect by convention.
      dice_sum += 1.0;
      if (!grad.empty()) {
        std::fill_n(grad.data() + b * voxels, voxels, 0.0);
      }
      continue;
    }
    dice_sum += num / den;
    if (!grad.empty()) {
      double* g = grad.data() + b * voxels;
      const double inv_batch = 1.0 / static_cast<double>(batch);
      for (std::int64_t v = 0; v < voxels; ++v) {
        g[v] = -inv_batch * (2.0 * t[v] * den - num) / (den * den);
      }
    }
  }
  return 1.0 - dice_sum / static_cast<double>(batch);
}

double soft_dice_batch(std::span<const double> probs,
                       std::span<const double> targets, std::int64_t batch,
                       std::int64_t voxels, double smooth,
                       std::span<double> grad) {
  check_inputs(probs, targets, batch, voxels, grad);
  const std::int64_t n = batch * voxels;
  double inter = 0.0, p_sum = 0.0, t_sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    inter += probs[i] * targets[i];
    p_sum += probs[i];
    t_sum += targets[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = p_sum + t_sum + smooth;
  if (den == 0.0) {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    return 0.0;  // all-empty pooled batch, smooth 0: perfect
  }
  if (!grad.empty()) {
    for (std::int64_t i = 0; i < n; ++i) {
      grad[i] = -(2.0 * targets[i] * den - num) / (den * den);
    }
  }
  return 1.0 - num / den;
}

double cross_entropy(std::span<const double> probs,
                     std::span<const double> targets, std::int64_t batch,
                     std::int64_t voxels, std::span<double> grad) {
  check_inputs(probs, targets, batch, voxels, grad);
  const std::int64_t n = batch * voxels;
  const double lo = kCrossEntropyClamp;
  const double hi = 1.0 - kCrossEntropyClamp;
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = std::clamp(probs[i], lo, hi);
    const double t = targets[i];
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    if (!grad.empty()) {
      const bool clamped = probs[i] < lo || probs[i] > hi;
      grad[i] = clamped ? 0.0
                        : (p - t) / (p * (1.0 - p)) /
                              static_cast<double>(n);
    }
  }
  return sum / static_cast<double>(n);
}

double combined_loss(std::span<const double> probs,
                     std::span<const double> targets, std::int64_t batch,
                     std::int64_t voxels, const LossConfig& config,
                     std::span<double> grad) {
  config.validate();
  std::vector<double> dice_grad, ce_grad;
  std::span<double> dice_span, ce_span;
  if (!grad.empty()) {
    dice_grad.assign(grad.size(), 0.0);
    ce_grad.assign(grad.size(), 0.0);
    dice_span = dice_grad;
    ce_span = ce_grad;
  }

  double total = 0.0;
  if (config.ce_weight > 0.0) {
    total += config.ce_weight *
             cross_entropy(probs, targets, batch, voxels, ce_span);
  }
  if (config.dice_weight > 0.0) {
    const double dice =
        config.dice_mode == DiceMode::kPerSample
            ? soft_dice_per_sample(probs, targets, batch, voxels,
                                   config.smooth, dice_span)
            : soft_dice_batch(probs, targets, batch, voxels, config.smooth,
                              dice_span);
    total += config.dice_weight * dice;
  }
  if (!grad.empty()) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad[i] = config.ce_weight * ce_grad[i] +
                config.dice_weight * dice_grad[i];
    }
  }
  return total;
}

}  // namespace petseg

// Segmentation losses over foreground probabilities, with analytic
// gradients. Inputs are batches laid out as `batch` contiguous samples of
// `voxels` values each. All computation is double precision so finite-
// difference checks are meaningful.
//
// Conventions (pinned because negative-control cases make the corner cases
// load-bearing):
//  * per-sample Dice with smooth == 0 on an empty target and empty
//    prediction counts as perfect (loss contribution 0);
//  * cross-entropy probabilities are clamped to [1e-7, 1 - 1e-7] inside the
//    logs.
#pragma once

#include <span>
#include <string>

namespace petseg {

enum class DiceMode { kPerSample, kBatch };

std::string to_string(DiceMode mode);
DiceMode parse_dice_mode(const std::string& name);

struct LossConfig {
  DiceMode dice_mode = DiceMode::kPerSample;
  double smooth = 1e-5;
  double ce_weight = 1.0;
  double dice_weight = 1.0;

  void validate() const;  // weights >= 0, ce + dice > 0, smooth >= 0
};

constexpr double kCrossEntropyClamp = 1e-7;

// Each function returns the scalar loss; when `grad` is non-empty it must
// have batch*voxels elements and receives d(loss)/d(probs), accumulated as
// an overwrite (not +=).

double soft_dice_per_sample(std::span<const double> probs,
                            std::span<const double> targets,
                            std::int64_t batch, std::int64_t voxels,
                            double smooth, std::span<double> grad = {});

double soft_dice_batch(std::span<const double> probs,
                       std::span<const double> targets, std::int64_t batch,
                       std::int64_t voxels, double smooth,
                       std::span<double> grad = {});

double cross_entropy(std::span<const double> probs,
                     std::span<const double> targets, std::int64_t batch,
                     std::int64_t voxels, std::span<double> grad = {});

double combined_loss(std::span<const double> probs,
                     std::span<const double> targets, std::int64_t batch,
                     std::int64_t voxels, const LossConfig& config,
                     std::span<double> grad = {});

}  // namespace petseg

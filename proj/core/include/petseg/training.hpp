// Training-strategy presets, stratified k-fold splitting, patch sampling and
// the per-fold optimization loop.
//
// The four presets mirror the compared strategies:
//   BASELINE   CT-scheme normalization for both channels, per-sample Dice,
//              batch size 2, no augmentation
//   ZSCORE     as BASELINE but per-volume z-score for the PET channel
//   BRATS2020  as BASELINE but batch size 5 and batch-pooled Dice
//   CRAVEMIX   as BASELINE plus a pre-generated lesion-mixing pool
//              (350 cases per fold at paper scale)
//
// Optimization: SGD with Nesterov momentum 0.99, weight decay 3e-5, gradient
// norm clipping at 12 and polynomial LR decay (exponent 0.9) from 1e-2; an
// epoch is a fixed number of batches. All randomness is drawn from named
// substreams of the strategy seed, and serial training is bit-reproducible.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "petseg/cravemix.hpp"
#include "petseg/dataset.hpp"
#include "petseg/losses.hpp"
#include "petseg/model.hpp"
#include "petseg/rng.hpp"
#include "petseg/unet.hpp"
#include "petseg/volume.hpp"

namespace petseg {

enum class StrategyId { kBaseline, kZscore, kBrats2020, kCravemix };

std::string to_string(StrategyId id);
StrategyId parse_strategy_id(const std::string& name);

struct OptimizerConfig {
  double initial_lr = 1e-2;
  double momentum = 0.99;
  bool nesterov = true;
  double poly_exponent = 0.9;
  double weight_decay = 3e-5;
  double grad_clip_norm = 12.0;
};

// SGD + Nesterov momentum over parameter groups; group sizes are fixed by
// the first step() call.
class SgdNesterov {
 public:
  explicit SgdNesterov(OptimizerConfig config) : cfg_(config) {}

  void step(std::span<std::vector<float>*> params,
            std::span<const std::vector<float>> grads, double lr);

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<float>> velocity_;
};

struct StrategyConfig {
  StrategyId id = StrategyId::kBaseline;
  NormalizationMode normalization = NormalizationMode::kCtSchemeBoth;
  LossConfig loss;
  int batch_size = 2;
  int augmentation_count_per_fold = 0;
  int epochs = 30;
  int batches_per_epoch = 50;
  double foreground_oversample_fraction = 0.33;
  bool flip_augmentation = true;
  OptimizerConfig optimizer;
  ModelConfig model;  // carries the patch size
  std::uint64_t rng_seed = 0;

  // paper_scale pins the published sizes (192^3 patch, 6 stages, 350
  // augmentations per fold); the default is the desk-scale preset trainable
  // on a CPU.
  static StrategyConfig preset(StrategyId id, bool paper_scale = false);
  void validate() const;
  Dims3 patch_size() const { return model.patch_size; }
};

struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignment;

  std::vector<std::string> train_ids(int fold) const;
  std::vector<std::string> val_ids(int fold) const;
  void validate() const;
};

// Stratified so lesion-bearing counts per fold differ by at most 1, as do
// fold sizes. Deterministic in (cases, k, seed).
FoldSplit make_folds(std::span<const ManifestEntry> cases, int k,
                     std::uint64_t seed);

struct TrainingBatch {
  int batch = 0;
  Dims3 patch;
  std::vector<float> inputs;    // batch x 2 channels x patch, channel-major
  std::vector<double> targets;  // batch x patch, foreground labels
  std::vector<std::string> source_ids;
};

// `pool` holds already-normalized cases. At least
// ceil(foreground_oversample_fraction * batch_size) patches are centered on
// a foreground voxel when their source case has one; remaining centers are
// uniform over the volume.
TrainingBatch sample_training_batch(std::span<const CaseRecord* const> pool,
                                    const StrategyConfig& strategy, Rng& rng);

struct TrainingLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double val_dice_patch = 0.0;  // patch-level, logging only
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct TrainAudit {
  std::string strategy_id;
  int fold = -1;
  int batch_size = 0;
  std::string dice_mode;
  int augmented_pool_size = 0;
  std::vector<std::string> stat_source_ids;
  std::vector<std::string> patch_source_ids;  // unique, sorted
  std::vector<std::string> aug_donor_ids;     // unique, sorted
  std::vector<std::string> aug_recipient_ids;
};

struct TrainHooks {
  // Called after every epoch; return true to stop early.
  std::function<bool(int epoch, const UNet3d<float>& net,
                     const NormalizationRecord& norm)>
      after_epoch;
};

struct TrainResult {
  CheckpointMeta meta;
  std::shared_ptr<UNet3d<float>> net;
  std::vector<TrainingLogEntry> log;
  TrainAudit audit;
  std::filesystem::path checkpoint_path;  // empty when out_dir was empty
};

// Trains one fold. `cases` is the full dataset; the split selects training
// cases. The augmented pool (CRAVEMIX) must be pre-generated from this
// fold's training cases only; recipes naming a validation case are rejected.
// When out_dir is non-empty, writes checkpoint.ckpt, norm_stats.json,
// training_log.csv and train_audit.json there.
TrainResult train_fold(const StrategyConfig& strategy, int fold,
                       std::span<const CaseRecord> cases,
                       const FoldSplit& split,
                       std::span<const CaseRecord> augmented_pool,
                       std::span<const MixRecipe> pool_recipes,
                       const std::filesystem::path& out_dir,
                       const TrainHooks& hooks = {});

void write_training_log_csv(const std::filesystem::path& path,
                            std::span<const TrainingLogEntry> log);
void write_train_audit_json(const std::filesystem::path& path,
                            const TrainAudit& audit);

}  // namespace petseg

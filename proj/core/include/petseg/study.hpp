// The full strategy-comparison study: per strategy, train every fold,
// predict its validation split with sliding-window inference, evaluate, and
// aggregate into one table (rows = strategies, columns = Dice / FN / FP).
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "petseg/inference.hpp"
#include "petseg/metrics.hpp"
#include "petseg/training.hpp"

namespace petseg {

// Desk-scale knobs that may override the preset defaults. Resolution order:
// explicit values here beat the experiment file, which beats built-in
// defaults (the CLI fills this struct accordingly).
struct StrategyOverrides {
  std::optional<Dims3> patch_size;
  std::optional<int> epochs;
  std::optional<int> batches_per_epoch;
  std::optional<int> augmentation_count_per_fold;
  std::optional<std::vector<int>> features_per_stage;
  std::optional<std::vector<int>> blocks_per_stage;
  std::optional<int> n_stages;
  std::optional<double> learning_rate;
  std::optional<bool> deep_supervision;
};

struct ExperimentSpec {
  std::filesystem::path dataset_dir;
  std::filesystem::path output_dir;
  std::vector<StrategyId> strategies{
      StrategyId::kBaseline, StrategyId::kZscore, StrategyId::kBrats2020,
      StrategyId::kCravemix};
  int folds = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  StrategyOverrides overrides;
  SlidingWindowConfig inference;

  void validate() const;
  StrategyConfig resolve_strategy(StrategyId id) const;
};

// Reads the JSON experiment file; missing fields keep their defaults.
ExperimentSpec read_experiment_spec(const std::filesystem::path& path);
void write_experiment_spec(const std::filesystem::path& path,
                           const ExperimentSpec& spec);

struct StudyResult {
  std::vector<MetricsReport> reports;  // one per strategy, spec order
  std::filesystem::path report_json;
  std::filesystem::path metrics_csv;
  std::filesystem::path table_txt;
  std::string table;
};

// Output layout under spec.output_dir:
//   experiment.json, folds.json
//   augmented/fold<f>/<case>/...         CRAVEMIX pools + mix_manifest.json
//   <STRATEGY>/fold<f>/checkpoint.ckpt, norm_stats.json,
//                      training_log.csv, train_audit.json
//   <STRATEGY>/predictions/<case>/pred_prob.nii.gz, pred_mask.nii.gz
//   report.json, metrics.csv, study_table.txt
StudyResult run_study(const ExperimentSpec& spec);

}  // namespace petseg

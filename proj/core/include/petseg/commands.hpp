// The operations behind the petseg CLI subcommands, kept in the library so
// they can be driven from tests. The tool in tools/ only parses flags.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "petseg/phantom.hpp"
#include "petseg/study.hpp"

namespace petseg {

struct GenerateDataParams {
  std::filesystem::path out_dir;
  int count_positive = 20;
  int count_negative = 10;
  PhantomConfig phantom;  // per-case seeds derive from phantom.rng_seed
  int folds = 5;          // split recorded in the manifest
};

// Writes count_positive lesion-bearing and count_negative lesion-free cases
// plus dataset.json; deterministic per seed. Returns the manifest.
DatasetManifest cmd_generate_data(const GenerateDataParams& params);

struct TrainParams {
  ExperimentSpec spec;
  std::vector<StrategyId> strategies;  // empty = spec.strategies
  int fold = -1;                       // -1 = all folds
};

// Trains the requested strategies/folds into spec.output_dir (same layout as
// run_study, without predictions or reports).
void cmd_train(const TrainParams& params);

struct PredictParams {
  std::filesystem::path case_dir;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path out_dir;
  SlidingWindowConfig inference;
};

// Ensemble prediction for one case; writes pred_prob.nii.gz and
// pred_mask.nii.gz into out_dir.
void cmd_predict(const PredictParams& params);

struct EvaluateParams {
  std::filesystem::path pred_dir;  // <pred_dir>/<case_id>/pred_mask.nii.gz
  std::filesystem::path dataset_dir;
  std::filesystem::path out_dir;
  std::string strategy_label = "EVAL";
};

// Evaluates every manifest case with a prediction present; writes
// metrics.csv and report.json into out_dir and returns the report.
MetricsReport cmd_evaluate(const EvaluateParams& params);

// Full four-strategy comparison; returns the table text.
StudyResult cmd_study(const ExperimentSpec& spec);

}  // namespace petseg

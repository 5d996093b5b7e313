// petseg: batch CLI for the PET/CT lesion-segmentation lab.
//
// Subcommands: generate-data, train, predict, evaluate, study.
// Exit codes: 0 success, 1 usage error, 2 runtime failure (with a one-line
// diagnostic on stderr and a machine-readable error.json).
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "petseg/commands.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonStudyFlags {
  std::string experiment_file;
  std::string dataset;
  std::string output;
  std::vector<std::string> strategies;
  int folds = -1;
  std::optional<std::uint64_t> seed;
  int jobs = -1;
  std::vector<int> patch;
  int epochs = -1;
  int batches_per_epoch = -1;
  int aug_count = -1;
  double learning_rate = -1.0;
  double overlap = -1.0;
  double sigma_scale = -1.0;
  double threshold = -1.0;
};

void add_study_flags(CLI::App* cmd, CommonStudyFlags& f) {
  cmd->add_option("--experiment", f.experiment_file,
                  "Experiment spec JSON (flags override its values)");
  cmd->add_option("--dataset", f.dataset, "Dataset directory");
  cmd->add_option("--output", f.output, "Output directory");
  cmd->add_option("--strategy", f.strategies,
                  "Strategy preset(s): BASELINE ZSCORE BRATS2020 CRAVEMIX");
  cmd->add_option("--folds", f.folds, "Number of cross-validation folds");
  cmd->add_option("--seed", f.seed, "Global seed for all substreams");
  cmd->add_option("--jobs", f.jobs, "Parallel fold-training jobs");
  cmd->add_option("--patch", f.patch, "Patch size override (3 ints)")
      ->expected(3);
  cmd->add_option("--epochs", f.epochs, "Epochs per fold");
  cmd->add_option("--batches-per-epoch", f.batches_per_epoch,
                  "Batches per epoch");
  cmd->add_option("--aug-count", f.aug_count,
                  "CRAVEMIX augmented cases per fold");
  cmd->add_option("--learning-rate", f.learning_rate, "Initial learning rate");
  cmd->add_option("--overlap", f.overlap, "Sliding-window overlap [0,1)");
  cmd->add_option("--sigma-scale", f.sigma_scale,
                  "Gaussian weight sigma as a fraction of patch size");
  cmd->add_option("--threshold", f.threshold, "Binarization threshold");
}

// Flags beat the experiment file, which beats the built-in defaults.
petseg::ExperimentSpec resolve_spec(const CommonStudyFlags& f) {
  petseg::ExperimentSpec spec;
  if (!f.experiment_file.empty()) {
    spec = petseg::read_experiment_spec(f.experiment_file);
  }
  if (!f.dataset.empty()) spec.dataset_dir = f.dataset;
  if (!f.output.empty()) spec.output_dir = f.output;
  if (!f.strategies.empty()) {
    spec.strategies.clear();
    for (const auto& s : f.strategies) {
      spec.strategies.push_back(petseg::parse_strategy_id(s));
    }
  }
  if (f.folds > 0) spec.folds = f.folds;
  if (f.seed) spec.seed = *f.seed;
  if (f.jobs > 0) spec.jobs = f.jobs;
  if (!f.patch.empty()) {
    spec.overrides.patch_size =
        petseg::Dims3{f.patch[0], f.patch[1], f.patch[2]};
  }
  if (f.epochs > 0) spec.overrides.epochs = f.epochs;
  if (f.batches_per_epoch > 0) {
    spec.overrides.batches_per_epoch = f.batches_per_epoch;
  }
  if (f.aug_count >= 0) spec.overrides.augmentation_count_per_fold = f.aug_count;
  if (f.learning_rate > 0) spec.overrides.learning_rate = f.learning_rate;
  if (f.overlap >= 0) spec.inference.overlap = f.overlap;
  if (f.sigma_scale > 0) spec.inference.sigma_scale = f.sigma_scale;
  if (f.threshold >= 0) spec.inference.threshold = f.threshold;
  spec.validate();
  return spec;
}

void write_error_record(const fs::path& dir, const std::string& command,
                        const std::string& message) {
  const json j = {{"command", command}, {"error", message}};
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / "error.json");
  if (out) out << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale PET/CT lesion segmentation lab"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand(
      "generate-data", "Generate a synthetic phantom dataset with manifest");
  petseg::GenerateDataParams gen_params;
  std::string gen_out;
  std::vector<int> gen_grid;
  double gen_spacing = 2.0;
  std::uint64_t gen_seed = 0;
  std::vector<int> lesion_count{1, 3};
  std::vector<double> lesion_radius{4.0, 8.0};
  std::vector<double> uptake{4.0, 8.0};
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--positives", gen_params.count_positive,
                  "Lesion-bearing case count");
  gen->add_option("--negatives", gen_params.count_negative,
                  "Negative-control case count");
  gen->add_option("--grid", gen_grid, "Grid shape (3 ints)")->expected(3);
  gen->add_option("--spacing", gen_spacing, "Isotropic voxel spacing in mm");
  gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--folds", gen_params.folds,
                  "Folds recorded in the manifest split");
  gen->add_option("--lesions", lesion_count, "Lesion count range (2 ints)")
      ->expected(2);
  gen->add_option("--radius-mm", lesion_radius, "Lesion radius range in mm")
      ->expected(2);
  gen->add_option("--uptake", uptake, "PET lesion uptake range")->expected(2);
  gen->add_option("--noise", gen_params.phantom.background_noise_sigma,
                  "Background noise sigma (PET units)");

  // train
  auto* train = app.add_subcommand("train", "Train strategy folds");
  CommonStudyFlags train_flags;
  int train_fold_index = -1;
  add_study_flags(train, train_flags);
  train->add_option("--fold", train_fold_index,
                    "Train only this fold (default: all)");

  // predict
  auto* predict = app.add_subcommand(
      "predict", "Sliding-window ensemble prediction for one case");
  petseg::PredictParams pred_params;
  std::string pred_case, pred_out;
  std::vector<std::string> pred_ckpts;
  predict->add_option("--case", pred_case, "Case directory")->required();
  predict->add_option("--checkpoint", pred_ckpts,
                      "Checkpoint file(s); repeat for an ensemble")
      ->required();
  predict->add_option("--out", pred_out, "Output directory")->required();
  predict->add_option("--overlap", pred_params.inference.overlap,
                      "Sliding-window overlap [0,1)");
  predict->add_option("--sigma-scale", pred_params.inference.sigma_scale,
                      "Gaussian weight sigma scale");
  predict->add_option("--threshold", pred_params.inference.threshold,
                      "Binarization threshold");

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "Evaluate saved predictions against a dataset");
  petseg::EvaluateParams eval_params;
  std::string eval_pred, eval_dataset, eval_out;
  evaluate->add_option("--pred", eval_pred, "Predictions directory")
      ->required();
  evaluate->add_option("--dataset", eval_dataset, "Dataset directory")
      ->required();
  evaluate->add_option("--out", eval_out, "Output directory")->required();
  evaluate->add_option("--label", eval_params.strategy_label,
                       "Strategy label used in the report");

  // study
  auto* study = app.add_subcommand(
      "study", "Train and evaluate every strategy preset (the full table)");
  CommonStudyFlags study_flags;
  add_study_flags(study, study_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  std::string command = "petseg";
  fs::path error_dir = ".";
  try {
    if (gen->parsed()) {
      command = "generate-data";
      gen_params.out_dir = gen_out;
      error_dir = gen_params.out_dir;
      if (!gen_grid.empty()) {
        gen_params.phantom.grid_shape =
            petseg::Dims3{gen_grid[0], gen_grid[1], gen_grid[2]};
      }
      gen_params.phantom.spacing = {gen_spacing, gen_spacing, gen_spacing};
      gen_params.phantom.rng_seed = gen_seed;
      gen_params.phantom.lesion_count_range = {lesion_count[0],
                                               lesion_count[1]};
      gen_params.phantom.lesion_radius_range_mm = {lesion_radius[0],
                                                   lesion_radius[1]};
      gen_params.phantom.pet_lesion_uptake_range = {uptake[0], uptake[1]};
      const auto manifest = petseg::cmd_generate_data(gen_params);
      std::printf("wrote %zu cases to %s\n", manifest.cases.size(),
                  gen_out.c_str());
    } else if (train->parsed()) {
      command = "train";
      petseg::TrainParams params;
      params.spec = resolve_spec(train_flags);
      params.fold = train_fold_index;
      error_dir = params.spec.output_dir;
      petseg::cmd_train(params);
      std::printf("training artifacts written to %s\n",
                  params.spec.output_dir.string().c_str());
    } else if (predict->parsed()) {
      command = "predict";
      pred_params.case_dir = pred_case;
      pred_params.out_dir = pred_out;
      for (const auto& c : pred_ckpts) pred_params.checkpoints.push_back(c);
      error_dir = pred_params.out_dir;
      petseg::cmd_predict(pred_params);
      std::printf("predictions written to %s\n", pred_out.c_str());
    } else if (evaluate->parsed()) {
      command = "evaluate";
      eval_params.pred_dir = eval_pred;
      eval_params.dataset_dir = eval_dataset;
      eval_params.out_dir = eval_out;
      error_dir = eval_params.out_dir;
      const auto report = petseg::cmd_evaluate(eval_params);
      std::printf("%zu cases: dice %.4f, FN %.4f ml, FP %.4f ml\n",
                  report.per_case.size(), report.mean_dice,
                  report.mean_fn_volume_ml, report.mean_fp_volume_ml);
    } else if (study->parsed()) {
      command = "study";
      const auto spec = resolve_spec(study_flags);
      error_dir = spec.output_dir;
      const auto result = petseg::cmd_study(spec);
      std::fputs(result.table.c_str(), stdout);
      std::printf("report: %s\n", result.report_json.string().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "petseg %s: error: %s\n", command.c_str(), e.what());
    write_error_record(error_dir, command, e.what());
    return 2;
  }
  return 0;
}

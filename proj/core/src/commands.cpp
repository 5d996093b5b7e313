#include "petseg/commands.hpp"

#include <cstdio>
#include <map>
#include <span>
#include <stdexcept>

#include "petseg/nifti.hpp"

namespace fs = std::filesystem;

namespace petseg {

DatasetManifest cmd_generate_data(const GenerateDataParams& params) {
  if (params.count_positive < 0 || params.count_negative < 0) {
    throw std::invalid_argument("generate-data: negative case counts");
  }
  if (params.count_positive + params.count_negative == 0) {
    throw std::invalid_argument("generate-data: nothing to generate");
  }
  fs::create_directories(params.out_dir);
  if (!fs::is_directory(params.out_dir)) {
    throw std::runtime_error("generate-data: cannot create '" +
                             params.out_dir.string() + "'");
  }

  DatasetManifest manifest;
  manifest.seed = params.phantom.rng_seed;

  int index = 0;
  auto generate = [&](bool positive, int count) {
    for (int i = 0; i < count; ++i, ++index) {
      PhantomConfig cfg = params.phantom;
      cfg.rng_seed = mix_seed(params.phantom.rng_seed,
                              static_cast<std::uint64_t>(index));
      if (!positive) cfg.lesion_count_range = {0, 0};
      char id[32];
      std::snprintf(id, sizeof(id), "case_%03d_%s", index,
                    positive ? "pos" : "neg");
      CaseRecord rec = generate_phantom(cfg, id);
      if (positive && !rec.has_lesion()) {
        throw std::runtime_error(
            "generate-data: phantom config produced an empty positive case");
      }
      save_case(rec, params.out_dir);
      manifest.cases.push_back(ManifestEntry{rec.case_id, positive, -1});
    }
  };
  generate(true, params.count_positive);
  generate(false, params.count_negative);

  if (params.folds >= 2 &&
      static_cast<int>(manifest.cases.size()) >= params.folds) {
    const FoldSplit split =
        make_folds(manifest.cases, params.folds,
                   mix_seed(params.phantom.rng_seed, "folds"));
    manifest.folds_k = split.k;
    for (auto& c : manifest.cases) c.fold = split.assignment.at(c.id);
  }
  write_manifest(params.out_dir, manifest);
  return manifest;
}

void cmd_train(const TrainParams& params) {
  const ExperimentSpec& spec = params.spec;
  spec.validate();
  const DatasetManifest manifest = read_manifest(spec.dataset_dir);
  const std::vector<CaseRecord> cases =
      load_dataset(spec.dataset_dir, manifest);

  FoldSplit split;
  if (manifest.folds_k == spec.folds) {
    split.k = spec.folds;
    for (const auto& c : manifest.cases) {
      if (c.fold < 0) {
        split.assignment.clear();
        break;
      }
      split.assignment[c.id] = c.fold;
    }
  }
  if (split.assignment.empty()) {
    split = make_folds(manifest.cases, spec.folds, mix_seed(spec.seed, "folds"));
  }

  std::map<std::string, const CaseRecord*> by_id;
  for (const auto& c : cases) by_id[c.case_id] = &c;

  const auto strategies =
      params.strategies.empty() ? spec.strategies : params.strategies;
  for (StrategyId sid : strategies) {
    const StrategyConfig cfg = spec.resolve_strategy(sid);
    for (int f = 0; f < split.k; ++f) {
      if (params.fold >= 0 && f != params.fold) continue;

      std::vector<CaseRecord> pool;
      std::vector<MixRecipe> recipes;
      if (sid == StrategyId::kCravemix) {
        std::vector<CaseRecord> train_cases;
        for (const auto& id : split.train_ids(f)) {
          train_cases.push_back(*by_id.at(id));
        }
        pool = generate_augmented_set(
            train_cases, cfg.augmentation_count_per_fold,
            mix_seed(mix_seed(cfg.rng_seed, "cravemix"),
                     static_cast<std::uint64_t>(f)),
            &recipes);
      }
      const fs::path fold_dir = spec.output_dir / to_string(sid) /
                                ("fold" + std::to_string(f));
      train_fold(cfg, f, cases, split, pool, recipes, fold_dir);
    }
  }
}

void cmd_predict(const PredictParams& params) {
  if (params.checkpoints.empty()) {
    throw std::invalid_argument("predict: no checkpoints given");
  }
  const CaseRecord rec = load_case_dir(params.case_dir);
  std::vector<LoadedModel> models;
  models.reserve(params.checkpoints.size());
  for (const auto& p : params.checkpoints) {
    models.push_back(load_checkpoint(p));
  }
  const VolumeGrid prob = predict_case(models, rec, params.inference);
  const VolumeGrid mask = binarize(prob, params.inference.threshold);

  fs::create_directories(params.out_dir);
  write_nifti((params.out_dir / "pred_prob.nii.gz").string(), prob,
              NiftiDType::kFloat32);
  write_nifti((params.out_dir / "pred_mask.nii.gz").string(), mask,
              NiftiDType::kUint8);
}

MetricsReport cmd_evaluate(const EvaluateParams& params) {
  const DatasetManifest manifest = read_manifest(params.dataset_dir);
  std::vector<CaseMetrics> metrics;
  for (const auto& entry : manifest.cases) {
    const fs::path mask_path =
        params.pred_dir / entry.id / "pred_mask.nii.gz";
    if (!fs::exists(mask_path)) continue;
    const CaseRecord rec = load_case_dir(params.dataset_dir / entry.id);
    const VolumeGrid mask = read_nifti(mask_path.string());
    metrics.push_back(evaluate_case(mask, rec));
  }
  if (metrics.empty()) {
    throw std::runtime_error("evaluate: no predictions found under '" +
                             params.pred_dir.string() + "'");
  }
  MetricsReport report =
      aggregate(std::move(metrics), params.strategy_label, "eval");

  fs::create_directories(params.out_dir);
  write_metrics_csv(params.out_dir / "metrics.csv",
                    std::span<const MetricsReport>(&report, 1));
  write_report_json(params.out_dir / "report.json",
                    std::span<const MetricsReport>(&report, 1),
                    manifest.folds_k, manifest.seed);
  return report;
}

StudyResult cmd_study(const ExperimentSpec& spec) { return run_study(spec); }

}  // namespace petseg

#include "petseg/study.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <thread>

#include "petseg/nifti.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace petseg {

void ExperimentSpec::validate() const {
  if (dataset_dir.empty() || output_dir.empty()) {
    throw std::invalid_argument("experiment: dataset and output paths required");
  }
  if (strategies.empty()) {
    throw std::invalid_argument("experiment: no strategies requested");
  }
  if (folds < 2) {
    throw std::invalid_argument("experiment: folds must be >= 2");
  }
  if (jobs < 1) {
    throw std::invalid_argument("experiment: jobs must be >= 1");
  }
}

StrategyConfig ExperimentSpec::resolve_strategy(StrategyId id) const {
  StrategyConfig c = StrategyConfig::preset(id);
  const auto& o = overrides;
  if (o.n_stages) {
    c.model.n_stages = *o.n_stages;
    c.model.features_per_stage.resize(*o.n_stages);
    int f = 8;
    for (int s = 0; s < *o.n_stages; ++s, f = std::min(2 * f, kFeatureCap)) {
      c.model.features_per_stage[s] = f;
    }
    c.model.blocks_per_stage.assign(*o.n_stages, 1);
  }
  if (o.features_per_stage) c.model.features_per_stage = *o.features_per_stage;
  if (o.blocks_per_stage) c.model.blocks_per_stage = *o.blocks_per_stage;
  if (o.patch_size) c.model.patch_size = *o.patch_size;
  if (o.deep_supervision) c.model.deep_supervision = *o.deep_supervision;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batches_per_epoch) c.batches_per_epoch = *o.batches_per_epoch;
  if (o.learning_rate) c.optimizer.initial_lr = *o.learning_rate;
  if (id == StrategyId::kCravemix && o.augmentation_count_per_fold) {
    c.augmentation_count_per_fold = *o.augmentation_count_per_fold;
  }
  c.rng_seed = mix_seed(seed, to_string(id));
  c.validate();
  return c;
}

namespace {

json spec_to_json(const ExperimentSpec& spec) {
  json strategies = json::array();
  for (auto s : spec.strategies) strategies.push_back(to_string(s));
  json j = {{"dataset", spec.dataset_dir.string()},
            {"output", spec.output_dir.string()},
            {"strategies", std::move(strategies)},
            {"folds", spec.folds},
            {"seed", spec.seed},
            {"jobs", spec.jobs},
            {"inference",
             {{"overlap", spec.inference.overlap},
              {"sigma_scale", spec.inference.sigma_scale},
              {"threshold", spec.inference.threshold}}}};
  json o = json::object();
  const auto& ov = spec.overrides;
  if (ov.patch_size) {
    o["patch_size"] = {ov.patch_size->nx, ov.patch_size->ny, ov.patch_size->nz};
  }
  if (ov.epochs) o["epochs"] = *ov.epochs;
  if (ov.batches_per_epoch) o["batches_per_epoch"] = *ov.batches_per_epoch;
  if (ov.augmentation_count_per_fold) {
    o["augmentation_count_per_fold"] = *ov.augmentation_count_per_fold;
  }
  if (ov.features_per_stage) o["features_per_stage"] = *ov.features_per_stage;
  if (ov.blocks_per_stage) o["blocks_per_stage"] = *ov.blocks_per_stage;
  if (ov.n_stages) o["n_stages"] = *ov.n_stages;
  if (ov.learning_rate) o["learning_rate"] = *ov.learning_rate;
  if (ov.deep_supervision) o["deep_supervision"] = *ov.deep_supervision;
  if (!o.empty()) j["overrides"] = std::move(o);
  return j;
}

}  // namespace

ExperimentSpec read_experiment_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read experiment spec '" + path.string() +
                             "'");
  }
  json j = json::parse(in);
  ExperimentSpec spec;
  spec.dataset_dir = j.at("dataset").get<std::string>();
  spec.output_dir = j.at("output").get<std::string>();
  if (j.contains("strategies")) {
    spec.strategies.clear();
    for (const auto& s : j.at("strategies")) {
      spec.strategies.push_back(parse_strategy_id(s.get<std::string>()));
    }
  }
  spec.folds = j.value("folds", 5);
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.jobs = j.value("jobs", 1);
  if (j.contains("inference")) {
    const auto& i = j.at("inference");
    spec.inference.overlap = i.value("overlap", 0.5);
    spec.inference.sigma_scale = i.value("sigma_scale", 0.125);
    spec.inference.threshold = i.value("threshold", 0.5);
  }
  if (j.contains("overrides")) {
    const auto& o = j.at("overrides");
    if (o.contains("patch_size")) {
      const auto p = o.at("patch_size").get<std::vector<int>>();
      if (p.size() != 3) {
        throw std::runtime_error("experiment: patch_size must have 3 entries");
      }
      spec.overrides.patch_size = Dims3{p[0], p[1], p[2]};
    }
    if (o.contains("epochs")) spec.overrides.epochs = o.at("epochs").get<int>();
    if (o.contains("batches_per_epoch")) {
      spec.overrides.batches_per_epoch = o.at("batches_per_epoch").get<int>();
    }
    if (o.contains("augmentation_count_per_fold")) {
      spec.overrides.augmentation_count_per_fold =
          o.at("augmentation_count_per_fold").get<int>();
    }
    if (o.contains("features_per_stage")) {
      spec.overrides.features_per_stage =
          o.at("features_per_stage").get<std::vector<int>>();
    }
    if (o.contains("blocks_per_stage")) {
      spec.overrides.blocks_per_stage =
          o.at("blocks_per_stage").get<std::vector<int>>();
    }
    if (o.contains("n_stages")) {
      spec.overrides.n_stages = o.at("n_stages").get<int>();
    }
    if (o.contains("learning_rate")) {
      spec.overrides.learning_rate = o.at("learning_rate").get<double>();
    }
    if (o.contains("deep_supervision")) {
      spec.overrides.deep_supervision = o.at("deep_supervision").get<bool>();
    }
  }
  spec.validate();
  return spec;
}

void write_experiment_spec(const fs::path& path, const ExperimentSpec& spec) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << spec_to_json(spec).dump(2) << "\n";
}

namespace {

FoldSplit resolve_folds(const ExperimentSpec& spec,
                        const DatasetManifest& manifest) {
  // A manifest split with matching k wins; otherwise derive one from the
  // study seed.
  if (manifest.folds_k == spec.folds) {
    bool complete = true;
    FoldSplit split;
    split.k = spec.folds;
    for (const auto& c : manifest.cases) {
      if (c.fold < 0) {
        complete = false;
        break;
      }
      split.assignment[c.id] = c.fold;
    }
    if (complete) {
      split.validate();
      return split;
    }
  }
  return make_folds(manifest.cases, spec.folds, mix_seed(spec.seed, "folds"));
}

void write_folds_json(const fs::path& path, const FoldSplit& split) {
  json assignment = json::object();
  for (const auto& [id, f] : split.assignment) assignment[id] = f;
  json j = {{"k", split.k}, {"assignment", std::move(assignment)}};
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << j.dump(2) << "\n";
}

void write_mix_manifest(const fs::path& path,
                        std::span<const MixRecipe> recipes,
                        std::span<const CaseRecord> pool) {
  json entries = json::array();
  for (std::size_t i = 0; i < recipes.size(); ++i) {
    const auto& r = recipes[i];
    entries.push_back(json{{"case_id", pool[i].case_id},
                           {"donor", r.donor_id},
                           {"recipient", r.recipient_id},
                           {"component_id", r.component_id},
                           {"lambda_carve", r.lambda_carve},
                           {"blend_alpha", r.blend_alpha},
                           {"rng_seed", r.rng_seed},
                           {"label_union", r.label_union}});
  }
  json j = {{"recipes", std::move(entries)}};
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << j.dump(2) << "\n";
}

struct FoldJob {
  StrategyId strategy;
  int fold;
};

}  // namespace

StudyResult run_study(const ExperimentSpec& spec) {
  spec.validate();
  const DatasetManifest manifest = read_manifest(spec.dataset_dir);
  const std::vector<CaseRecord> cases =
      load_dataset(spec.dataset_dir, manifest);
  const FoldSplit split = resolve_folds(spec, manifest);

  fs::create_directories(spec.output_dir);
  write_experiment_spec(spec.output_dir / "experiment.json", spec);
  write_folds_json(spec.output_dir / "folds.json", split);

  std::map<std::string, const CaseRecord*> by_id;
  for (const auto& c : cases) by_id[c.case_id] = &c;

  // Pre-generate CRAVEMIX pools (materialized before training).
  std::map<int, std::vector<CaseRecord>> aug_pools;
  std::map<int, std::vector<MixRecipe>> aug_recipes;
  for (StrategyId sid : spec.strategies) {
    if (sid != StrategyId::kCravemix) continue;
    const StrategyConfig cfg = spec.resolve_strategy(sid);
    for (int f = 0; f < split.k; ++f) {
      std::vector<CaseRecord> train_cases;
      for (const auto& id : split.train_ids(f)) {
        train_cases.push_back(*by_id.at(id));
      }
      std::vector<MixRecipe> recipes;
      auto pool = generate_augmented_set(
          train_cases, cfg.augmentation_count_per_fold,
          mix_seed(mix_seed(cfg.rng_seed, "cravemix"),
                   static_cast<std::uint64_t>(f)),
          &recipes);
      const fs::path dir =
          spec.output_dir / "augmented" / ("fold" + std::to_string(f));
      fs::create_directories(dir);
      for (const auto& c : pool) save_case(c, dir);
      write_mix_manifest(dir / "mix_manifest.json", recipes, pool);
      aug_pools[f] = std::move(pool);
      aug_recipes[f] = std::move(recipes);
    }
  }

  // Train all (strategy, fold) jobs, optionally a few in parallel. Results
  // land in per-job directories; aggregation below is serial and ordered.
  std::vector<FoldJob> jobs;
  for (StrategyId sid : spec.strategies) {
    for (int f = 0; f < split.k; ++f) jobs.push_back(FoldJob{sid, f});
  }
  std::map<std::pair<std::string, int>, TrainResult> results;
  std::mutex results_mutex;

  auto run_job = [&](const FoldJob& job) {
    const StrategyConfig cfg = spec.resolve_strategy(job.strategy);
    const fs::path fold_dir = spec.output_dir / to_string(job.strategy) /
                              ("fold" + std::to_string(job.fold));
    std::span<const CaseRecord> pool;
    std::span<const MixRecipe> recipes;
    if (job.strategy == StrategyId::kCravemix) {
      pool = aug_pools.at(job.fold);
      recipes = aug_recipes.at(job.fold);
    }
    TrainResult r =
        train_fold(cfg, job.fold, cases, split, pool, recipes, fold_dir);
    std::lock_guard<std::mutex> lock(results_mutex);
    results[{to_string(job.strategy), job.fold}] = std::move(r);
  };

  if (spec.jobs <= 1) {
    for (const auto& job : jobs) run_job(job);
  } else {
    std::size_t next = 0;
    std::mutex next_mutex;
    auto worker = [&]() {
      while (true) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (next >= jobs.size()) return;
          i = next++;
        }
        run_job(jobs[i]);
      }
    };
    std::vector<std::thread> threads;
    const int n =
        std::min<int>(spec.jobs, static_cast<int>(jobs.size()));
    threads.reserve(n);
    for (int t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  // Validation predictions and metrics, per strategy in request order.
  StudyResult study;
  for (StrategyId sid : spec.strategies) {
    std::vector<CaseMetrics> case_metrics;
    for (int f = 0; f < split.k; ++f) {
      const TrainResult& r = results.at({to_string(sid), f});
      LoadedModel model{r.meta, r.net};
      for (const auto& id : split.val_ids(f)) {
        const CaseRecord& rec = *by_id.at(id);
        const VolumeGrid prob = predict_case(
            std::span<const LoadedModel>(&model, 1), rec, spec.inference);
        const VolumeGrid mask = binarize(prob, spec.inference.threshold);

        const fs::path pred_dir =
            spec.output_dir / to_string(sid) / "predictions" / id;
        fs::create_directories(pred_dir);
        write_nifti((pred_dir / "pred_prob.nii.gz").string(), prob,
                    NiftiDType::kFloat32);
        write_nifti((pred_dir / "pred_mask.nii.gz").string(), mask,
                    NiftiDType::kUint8);

        CaseMetrics m = evaluate_case(mask, rec);
        m.fold = f;
        case_metrics.push_back(std::move(m));
      }
    }
    study.reports.push_back(
        aggregate(std::move(case_metrics), to_string(sid), "cv"));
  }

  study.report_json = spec.output_dir / "report.json";
  study.metrics_csv = spec.output_dir / "metrics.csv";
  study.table_txt = spec.output_dir / "study_table.txt";
  write_report_json(study.report_json, study.reports, split.k, spec.seed);
  write_metrics_csv(study.metrics_csv, study.reports);
  study.table = format_study_table(study.reports);
  {
    std::ofstream out(study.table_txt);
    out << study.table;
  }
  return study;
}

}  // namespace petseg

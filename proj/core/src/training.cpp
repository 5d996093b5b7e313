#include "petseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

#include "petseg/patch.hpp"

using nlohmann::json;

namespace petseg {

std::string to_string(StrategyId id) {
  switch (id) {
    case StrategyId::kBaseline:
      return "BASELINE";
    case StrategyId::kZscore:
      return "ZSCORE";
    case StrategyId::kBrats2020:
      return "BRATS2020";
    case StrategyId::kCravemix:
      return "CRAVEMIX";
  }
  throw std::logic_error("unknown StrategyId");
}

StrategyId parse_strategy_id(const std::string& name) {
  if (name == "BASELINE") return StrategyId::kBaseline;
  if (name == "ZSCORE") return StrategyId::kZscore;
  if (name == "BRATS2020") return StrategyId::kBrats2020;
  if (name == "CRAVEMIX") return StrategyId::kCravemix;
  throw std::runtime_error("unknown strategy '" + name + "'");
}

void SgdNesterov::step(std::span<std::vector<float>*> params,
                       std::span<const std::vector<float>> grads, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("optimizer: params/grads size mismatch");
  }
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity_[i].assign(params[i]->size(), 0.0f);
    }
  }

  double norm_sq = 0.0;
  for (const auto& g : grads) {
    for (float v : g) norm_sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(norm_sq);
  const double clip = cfg_.grad_clip_norm > 0.0 && norm > cfg_.grad_clip_norm
                          ? cfg_.grad_clip_norm / norm
                          : 1.0;

  const float mu = static_cast<float>(cfg_.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = *params[i];
    auto& v = velocity_[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float gj = static_cast<float>(g[j] * clip +
                                          cfg_.weight_decay * w[j]);
      v[j] = mu * v[j] + gj;
      const float update = cfg_.nesterov ? gj + mu * v[j] : v[j];
      w[j] -= static_cast<float>(lr) * update;
    }
  }
}

StrategyConfig StrategyConfig::preset(StrategyId id, bool paper_scale) {
  StrategyConfig c;
  c.id = id;
  if (paper_scale) {
    c.model.n_stages = 6;
    c.model.features_per_stage = {32, 64, 128, 256, 320, 320};
    c.model.blocks_per_stage = {1, 3, 4, 6, 6, 6};
    c.model.patch_size = {192, 192, 192};
    c.epochs = 1000;
    c.batches_per_epoch = 250;
  }
  switch (id) {
    case StrategyId::kBaseline:
      break;
    case StrategyId::kZscore:
      c.normalization = NormalizationMode::kCtForCtZscoreForPet;
      break;
    case StrategyId::kBrats2020:
      c.batch_size = 5;
      c.loss.dice_mode = DiceMode::kBatch;
      break;
    case StrategyId::kCravemix:
      c.augmentation_count_per_fold = paper_scale ? 350 : 20;
      break;
  }
  c.validate();
  return c;
}

void StrategyConfig::validate() const {
  loss.validate();
  model.validate();
  if (batch_size < 1 || epochs < 1 || batches_per_epoch < 1) {
    throw std::invalid_argument("strategy: sizes must be >= 1");
  }
  if (foreground_oversample_fraction < 0.0 ||
      foreground_oversample_fraction > 1.0) {
    throw std::invalid_argument(
        "strategy: foreground_oversample_fraction outside [0,1]");
  }
  if (augmentation_count_per_fold < 0) {
    throw std::invalid_argument("strategy: negative augmentation count");
  }

  // The published strategy definitions; violating one means the preset no
  // longer tests what it claims to.
  auto pin = [&](bool ok, const char* what) {
    if (!ok) {
      throw std::invalid_argument("strategy " + to_string(id) +
                                  " violates its definition: " + what);
    }
  };
  switch (id) {
    case StrategyId::kBaseline:
      pin(normalization == NormalizationMode::kCtSchemeBoth,
          "CT-scheme normalization for both channels");
      pin(loss.dice_mode == DiceMode::kPerSample, "per-sample dice");
      pin(batch_size == 2, "batch size 2");
      pin(augmentation_count_per_fold == 0, "no augmentation");
      break;
    case StrategyId::kZscore:
      pin(normalization == NormalizationMode::kCtForCtZscoreForPet,
          "z-score PET normalization");
      pin(loss.dice_mode == DiceMode::kPerSample, "per-sample dice");
      pin(batch_size == 2, "batch size 2");
      pin(augmentation_count_per_fold == 0, "no augmentation");
      break;
    case StrategyId::kBrats2020:
      pin(normalization == NormalizationMode::kCtSchemeBoth,
          "baseline normalization");
      pin(loss.dice_mode == DiceMode::kBatch, "batch dice");
      pin(batch_size == 5, "batch size 5");
      pin(augmentation_count_per_fold == 0, "no augmentation");
      break;
    case StrategyId::kCravemix:
      pin(normalization == NormalizationMode::kCtSchemeBoth,
          "baseline normalization");
      pin(loss.dice_mode == DiceMode::kPerSample, "per-sample dice");
      pin(batch_size == 2, "batch size 2");
      pin(augmentation_count_per_fold > 0, "augmented pool present");
      break;
  }
}

std::vector<std::string> FoldSplit::train_ids(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignment) {
    if (f != fold) ids.push_back(id);
  }
  return ids;
}

std::vector<std::string> FoldSplit::val_ids(int fold) const {
  std::vector<std::string> ids;
  for (const auto& [id, f] : assignment) {
    if (f == fold) ids.push_back(id);
  }
  return ids;
}

void FoldSplit::validate() const {
  if (k < 2) throw std::runtime_error("fold split: k must be >= 2");
  for (const auto& [id, f] : assignment) {
    if (f < 0 || f >= k) {
      throw std::runtime_error("fold split: case '" + id +
                               "' has fold outside [0,k)");
    }
  }
}

FoldSplit make_folds(std::span<const ManifestEntry> cases, int k,
                     std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
  if (static_cast<int>(cases.size()) < k) {
    throw std::invalid_argument("make_folds: fewer cases than folds");
  }

  std::vector<std::string> positives, negatives;
  for (const auto& c : cases) {
    (c.has_lesion ? positives : negatives).push_back(c.id);
  }
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());

  Rng rng(seed);
  auto shuffle = [&rng](std::vector<std::string>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  };
  shuffle(positives);
  shuffle(negatives);

  FoldSplit split;
  split.k = k;
  // Round-robin, negatives continuing the cycle where positives stopped, so
  // both fold sizes and positives-per-fold differ by at most one.
  std::size_t slot = 0;
  for (const auto& id : positives) {
    split.assignment[id] = static_cast<int>(slot++ % k);
  }
  for (const auto& id : negatives) {
    split.assignment[id] = static_cast<int>(slot++ % k);
  }
  split.validate();
  return split;
}

namespace {

double volume_min(const VolumeGrid& v) {
  return *std::min_element(v.data().begin(), v.data().end());
}

void flip_patch(std::vector<double>& p, Dims3 size, bool fx, bool fy,
                bool fz) {
  if (!fx && !fy && !fz) return;
  std::vector<double> tmp(p.size());
  for (int z = 0; z < size.nz; ++z) {
    for (int y = 0; y < size.ny; ++y) {
      for (int x = 0; x < size.nx; ++x) {
        const int sx = fx ? size.nx - 1 - x : x;
        const int sy = fy ? size.ny - 1 - y : y;
        const int sz = fz ? size.nz - 1 - z : z;
        tmp[x + static_cast<std::int64_t>(size.nx) *
                    (y + static_cast<std::int64_t>(size.ny) * z)] =
            p[sx + static_cast<std::int64_t>(size.nx) *
                       (sy + static_cast<std::int64_t>(size.ny) * sz)];
      }
    }
  }
  p.swap(tmp);
}

}  // namespace

TrainingBatch sample_training_batch(std::span<const CaseRecord* const> pool,
                                    const StrategyConfig& strategy, Rng& rng) {
  if (pool.empty()) {
    throw std::invalid_argument("sample_training_batch: empty case pool");
  }
  const Dims3 patch = strategy.patch_size();
  const std::int64_t patch_n = patch.count();
  const int batch = strategy.batch_size;
  const int forced =
      static_cast<int>(std::ceil(strategy.foreground_oversample_fraction *
                                 static_cast<double>(batch)));

  TrainingBatch out;
  out.batch = batch;
  out.patch = patch;
  out.inputs.resize(static_cast<std::size_t>(batch) * 2 * patch_n);
  out.targets.resize(static_cast<std::size_t>(batch) * patch_n);

  for (int b = 0; b < batch; ++b) {
    const CaseRecord& rec = *pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    out.source_ids.push_back(rec.case_id);
    const Dims3 vd = rec.label.dims();

    Index3 center;
    bool centered_on_fg = false;
    if (b < forced) {
      std::vector<std::int64_t> fg;
      for (std::int64_t i = 0; i < rec.label.size(); ++i) {
        if (rec.label.data()[i] != 0.0) fg.push_back(i);
      }
      if (!fg.empty()) {
        const std::int64_t pick = fg[static_cast<std::size_t>(rng.uniform_int(
            0, static_cast<std::int64_t>(fg.size()) - 1))];
        center.x = static_cast<int>(pick % vd.nx);
        center.y = static_cast<int>((pick / vd.nx) % vd.ny);
        center.z = static_cast<int>(pick / (static_cast<std::int64_t>(vd.nx) *
                                            vd.ny));
        centered_on_fg = true;
      }
    }
    if (!centered_on_fg) {
      center.x = static_cast<int>(rng.uniform_int(0, vd.nx - 1));
      center.y = static_cast<int>(rng.uniform_int(0, vd.ny - 1));
      center.z = static_cast<int>(rng.uniform_int(0, vd.nz - 1));
    }

    CasePatch cp = extract_case_patch(rec, center, patch, volume_min(rec.ct),
                                      0.0);
    if (strategy.flip_augmentation) {
      const bool fx = rng.bernoulli(0.5);
      const bool fy = rng.bernoulli(0.5);
      const bool fz = rng.bernoulli(0.5);
      flip_patch(cp.ct, patch, fx, fy, fz);
      flip_patch(cp.pet, patch, fx, fy, fz);
      flip_patch(cp.label, patch, fx, fy, fz);
    }

    float* ct_dst = out.inputs.data() +
                    static_cast<std::size_t>(b) * 2 * patch_n;
    float* pet_dst = ct_dst + patch_n;
    double* t_dst = out.targets.data() + static_cast<std::size_t>(b) * patch_n;
    for (std::int64_t i = 0; i < patch_n; ++i) {
      ct_dst[i] = static_cast<float>(cp.ct[i]);
      pet_dst[i] = static_cast<float>(cp.pet[i]);
      t_dst[i] = cp.label[i];
    }
  }
  return out;
}

namespace {

struct DeepSupervisionPlan {
  // Level 0 is the full-resolution output; level l > 0 corresponds to
  // decoder resolution 1/2^l. Weights halve per level and sum to 1.
  std::vector<double> weights;
};

DeepSupervisionPlan make_ds_plan(const ModelConfig& cfg) {
  DeepSupervisionPlan plan;
  const int levels = cfg.deep_supervision ? cfg.n_stages - 1 : 1;
  double w = 1.0, total = 0.0;
  for (int l = 0; l < levels; ++l, w *= 0.5) {
    plan.weights.push_back(w);
    total += w;
  }
  for (auto& v : plan.weights) v /= total;
  return plan;
}

// Nearest-neighbor downsample of a target patch by 2^level.
std::vector<double> downsample_targets(const std::vector<double>& t,
                                       Dims3 full, int level) {
  if (level == 0) return t;
  const int f = 1 << level;
  const Dims3 d{full.nx / f, full.ny / f, full.nz / f};
  std::vector<double> out(static_cast<std::size_t>(d.count()));
  std::size_t i = 0;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x, ++i) {
        out[i] = t[static_cast<std::int64_t>(x) * f +
                   static_cast<std::int64_t>(full.nx) *
                       (static_cast<std::int64_t>(y) * f +
                        static_cast<std::int64_t>(full.ny) *
                            (static_cast<std::int64_t>(z) * f))];
      }
    }
  }
  return out;
}

// Softmax over the two channels in double precision; returns foreground
// probabilities.
void softmax_fg(const nn::FeatureMap<float>& logits, std::vector<double>& fg) {
  const std::int64_t n = logits.spatial();
  fg.resize(static_cast<std::size_t>(n));
  const float* l0 = logits.ch(0);
  const float* l1 = logits.ch(1);
  for (std::int64_t i = 0; i < n; ++i) {
    fg[i] = 1.0 / (1.0 + std::exp(static_cast<double>(l0[i]) - l1[i]));
  }
}

// dL/dlogits from dL/dp_fg for a two-channel softmax.
void softmax_backward_fg(const std::vector<double>& fg,
                         const std::vector<double>& dprob, std::int64_t offset,
                         nn::FeatureMap<float>& dlogits) {
  const std::int64_t n = dlogits.spatial();
  float* d0 = dlogits.ch(0);
  float* d1 = dlogits.ch(1);
  for (std::int64_t i = 0; i < n; ++i) {
    const double p = fg[i];
    const double g = dprob[offset + i] * p * (1.0 - p);
    d1[i] = static_cast<float>(g);
    d0[i] = static_cast<float>(-g);
  }
}

}  // namespace

TrainResult train_fold(const StrategyConfig& strategy, int fold,
                       std::span<const CaseRecord> cases,
                       const FoldSplit& split,
                       std::span<const CaseRecord> augmented_pool,
                       std::span<const MixRecipe> pool_recipes,
                       const std::filesystem::path& out_dir,
                       const TrainHooks& hooks) {
  strategy.validate();
  split.validate();
  if (fold < 0 || fold >= split.k) {
    throw std::invalid_argument("train_fold: fold index outside [0,k)");
  }

  const auto train_ids = split.train_ids(fold);
  if (train_ids.empty()) {
    throw std::runtime_error("train_fold: empty training split");
  }
  const std::set<std::string> train_id_set(train_ids.begin(), train_ids.end());

  // Leakage guard: every augmentation source must be a training case.
  for (const auto& r : pool_recipes) {
    if (!train_id_set.contains(r.donor_id) ||
        !train_id_set.contains(r.recipient_id)) {
      throw std::runtime_error(
          "train_fold: augmentation leakage, recipe uses non-training case '" +
          (train_id_set.contains(r.donor_id) ? r.recipient_id : r.donor_id) +
          "'");
    }
  }
  if (strategy.id == StrategyId::kCravemix &&
      static_cast<int>(augmented_pool.size()) !=
          strategy.augmentation_count_per_fold) {
    throw std::runtime_error(
        "train_fold: augmented pool size does not match the strategy config");
  }

  std::vector<const CaseRecord*> train_cases, val_cases;
  for (const auto& c : cases) {
    if (!split.assignment.contains(c.case_id)) continue;
    (train_id_set.contains(c.case_id) ? train_cases : val_cases).push_back(&c);
  }
  if (train_cases.size() != train_ids.size()) {
    throw std::runtime_error("train_fold: dataset is missing split cases");
  }

  // Fold statistics come from the real (non-augmented) training cases.
  NormalizationRecord norm;
  norm.mode = strategy.normalization;
  norm.ct_stats = compute_ct_norm_stats(
      std::span<const CaseRecord* const>(train_cases), NormChannel::kCt);
  if (strategy.normalization == NormalizationMode::kCtSchemeBoth) {
    norm.pet_stats = compute_ct_norm_stats(
        std::span<const CaseRecord* const>(train_cases), NormChannel::kPet);
  }

  std::vector<CaseRecord> pool_storage;
  pool_storage.reserve(train_cases.size() + augmented_pool.size());
  for (const auto* c : train_cases) {
    pool_storage.push_back(normalize_case(*c, norm));
  }
  for (const auto& c : augmented_pool) {
    pool_storage.push_back(normalize_case(c, norm));
  }
  std::vector<const CaseRecord*> pool;
  for (const auto& c : pool_storage) pool.push_back(&c);

  std::vector<CaseRecord> val_normalized;
  for (const auto* c : val_cases) {
    val_normalized.push_back(normalize_case(*c, norm));
  }

  // Model, optimizer, RNG streams.
  ModelConfig model_cfg = strategy.model;
  model_cfg.rng_seed = mix_seed(mix_seed(strategy.rng_seed, "init"),
                                static_cast<std::uint64_t>(fold));
  auto net = std::make_shared<UNet3d<float>>(model_cfg);
  SgdNesterov optimizer(strategy.optimizer);
  Rng sample_rng(mix_seed(mix_seed(strategy.rng_seed, "sample"),
                          static_cast<std::uint64_t>(fold)));
  Rng val_rng(mix_seed(mix_seed(strategy.rng_seed, "val"),
                       static_cast<std::uint64_t>(fold)));

  std::vector<std::vector<float>*> param_ptrs;
  for (auto& p : net->params()) param_ptrs.push_back(&p.v);
  std::vector<std::vector<float>> grads(net->params().size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    grads[i].assign(net->params()[i].v.size(), 0.0f);
  }

  const Dims3 patch = strategy.patch_size();
  const std::int64_t patch_n = patch.count();
  const auto ds = make_ds_plan(model_cfg);
  const int levels = static_cast<int>(ds.weights.size());

  UNet3d<float>::Workspace ws;
  std::vector<UNet3d<float>::Activations> acts(strategy.batch_size);
  std::vector<UNet3d<float>::Output> outs(strategy.batch_size);

  std::set<std::string> patch_sources;
  TrainResult result;
  result.net = net;

  for (int epoch = 0; epoch < strategy.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr =
        strategy.optimizer.initial_lr *
        std::pow(1.0 - static_cast<double>(epoch) / strategy.epochs,
                 strategy.optimizer.poly_exponent);

    double loss_sum = 0.0;
    for (int it = 0; it < strategy.batches_per_epoch; ++it) {
      const TrainingBatch batch =
          sample_training_batch(pool, strategy, sample_rng);
      for (const auto& id : batch.source_ids) patch_sources.insert(id);

      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);

      // Forward all samples (batch dice couples them).
      nn::FeatureMap<float> input;
      for (int b = 0; b < strategy.batch_size; ++b) {
        input.resize(2, patch);
        std::copy_n(batch.inputs.begin() +
                        static_cast<std::size_t>(b) * 2 * patch_n,
                    2 * patch_n, input.v.begin());
        outs[b] = net->forward(input, ws, acts[b]);
      }

      double step_loss = 0.0;
      // Per level: gather probabilities, compute the loss over the whole
      // batch, push gradients back through the softmax.
      std::vector<std::vector<nn::FeatureMap<float>>> dlogits(
          strategy.batch_size);
      for (int b = 0; b < strategy.batch_size; ++b) {
        dlogits[b].resize(levels);
      }
      std::vector<double> probs, targets, dprob;
      std::vector<std::vector<double>> level_fg(strategy.batch_size);
      for (int level = 0; level < levels; ++level) {
        const Dims3 ldims =
            level == 0 ? patch
                       : Dims3{patch.nx >> level, patch.ny >> level,
                               patch.nz >> level};
        const std::int64_t ln = ldims.count();
        probs.assign(static_cast<std::size_t>(strategy.batch_size) * ln, 0.0);
        targets.assign(probs.size(), 0.0);
        dprob.assign(probs.size(), 0.0);

        for (int b = 0; b < strategy.batch_size; ++b) {
          const nn::FeatureMap<float>& logits =
              level == 0 ? outs[b].logits : outs[b].aux[level - 1];
          softmax_fg(logits, level_fg[b]);
          std::copy(level_fg[b].begin(), level_fg[b].end(),
                    probs.begin() + static_cast<std::size_t>(b) * ln);
          std::vector<double> t(batch.targets.begin() +
                                    static_cast<std::size_t>(b) * patch_n,
                                batch.targets.begin() +
                                    static_cast<std::size_t>(b + 1) * patch_n);
          const auto t_ds = downsample_targets(t, patch, level);
          std::copy(t_ds.begin(), t_ds.end(),
                    targets.begin() + static_cast<std::size_t>(b) * ln);
        }

        const double level_loss =
            combined_loss(probs, targets, strategy.batch_size, ln,
                          strategy.loss, dprob);
        step_loss += ds.weights[level] * level_loss;

        for (int b = 0; b < strategy.batch_size; ++b) {
          auto& dl = dlogits[b][level];
          dl.resize(2, ldims);
          softmax_backward_fg(level_fg[b], dprob,
                              static_cast<std::int64_t>(b) * ln, dl);
          for (auto& v : dl.v) {
            v = static_cast<float>(v * ds.weights[level]);
          }
        }
      }

      if (!std::isfinite(step_loss)) {
        throw std::runtime_error(
            "train_fold: training diverged (non-finite loss) at epoch " +
            std::to_string(epoch) + ", batch " + std::to_string(it));
      }
      loss_sum += step_loss;

      for (int b = 0; b < strategy.batch_size; ++b) {
        input.resize(2, patch);
        std::copy_n(batch.inputs.begin() +
                        static_cast<std::size_t>(b) * 2 * patch_n,
                    2 * patch_n, input.v.begin());
        UNet3d<float>::Output grad_out;
        grad_out.logits = std::move(dlogits[b][0]);
        for (int level = 1; level < levels; ++level) {
          grad_out.aux.push_back(std::move(dlogits[b][level]));
        }
        net->backward(input, acts[b], grad_out, ws, grads);
      }

      optimizer.step(param_ptrs, grads, lr);
    }

    // Patch-level validation dice, for the log only.
    double val_dice = 0.0;
    if (!val_normalized.empty()) {
      const int n_val_patches = 4;
      double dice_sum = 0.0;
      std::vector<const CaseRecord*> vptrs;
      for (const auto& c : val_normalized) vptrs.push_back(&c);
      // Re-use the sampler, single patches centered on foreground for a
      // stable signal on sparse lesions. Never validated as a preset.
      StrategyConfig val_cfg = strategy;
      val_cfg.flip_augmentation = false;
      val_cfg.batch_size = 1;
      val_cfg.foreground_oversample_fraction = 1.0;
      for (int i = 0; i < n_val_patches; ++i) {
        const TrainingBatch vb = sample_training_batch(
            std::span<const CaseRecord* const>(vptrs), val_cfg, val_rng);
        nn::FeatureMap<float> input;
        input.resize(2, patch);
        std::copy(vb.inputs.begin(), vb.inputs.end(), input.v.begin());
        UNet3d<float>::Activations a;
        const auto out = net->forward(input, ws, a);
        std::vector<double> fg;
        softmax_fg(out.logits, fg);
        std::int64_t inter = 0, p_n = 0, t_n = 0;
        for (std::int64_t v = 0; v < patch_n; ++v) {
          const bool pv = fg[v] > 0.5;
          const bool tv = vb.targets[v] != 0.0;
          inter += pv && tv;
          p_n += pv;
          t_n += tv;
        }
        dice_sum += (p_n + t_n) == 0
                        ? 1.0
                        : 2.0 * static_cast<double>(inter) /
                              static_cast<double>(p_n + t_n);
      }
      val_dice = dice_sum / n_val_patches;
    }

    const auto t1 = std::chrono::steady_clock::now();
    TrainingLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / strategy.batches_per_epoch;
    entry.val_dice_patch = val_dice;
    entry.learning_rate = lr;
    entry.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.log.push_back(entry);

    if (hooks.after_epoch && hooks.after_epoch(epoch, *net, norm)) {
      break;
    }
  }

  // Audit record used by the leakage checks.
  result.audit.strategy_id = to_string(strategy.id);
  result.audit.fold = fold;
  result.audit.batch_size = strategy.batch_size;
  result.audit.dice_mode = to_string(strategy.loss.dice_mode);
  result.audit.augmented_pool_size = static_cast<int>(augmented_pool.size());
  result.audit.stat_source_ids = train_ids;
  result.audit.patch_source_ids.assign(patch_sources.begin(),
                                       patch_sources.end());
  {
    std::set<std::string> donors, recipients;
    for (const auto& r : pool_recipes) {
      donors.insert(r.donor_id);
      recipients.insert(r.recipient_id);
    }
    result.audit.aug_donor_ids.assign(donors.begin(), donors.end());
    result.audit.aug_recipient_ids.assign(recipients.begin(),
                                          recipients.end());
  }

  result.meta.config = model_cfg;
  result.meta.strategy_id = to_string(strategy.id);
  result.meta.normalization = norm;
  result.meta.fold_index = fold;
  result.meta.fold_count = split.k;
  result.meta.validate();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    result.checkpoint_path = out_dir / "checkpoint.ckpt";
    save_checkpoint(*net, result.meta, result.checkpoint_path);
    write_norm_stats(out_dir / "norm_stats.json", norm);
    write_training_log_csv(out_dir / "training_log.csv", result.log);
    write_train_audit_json(out_dir / "train_audit.json", result.audit);
  }
  return result;
}

void write_training_log_csv(const std::filesystem::path& path,
                            std::span<const TrainingLogEntry> log) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << "epoch,train_loss,val_dice_patch,learning_rate,seconds\n";
  char line[256];
  for (const auto& e : log) {
    std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.3f\n", e.epoch,
                  e.train_loss, e.val_dice_patch, e.learning_rate, e.seconds);
    out << line;
  }
}

void write_train_audit_json(const std::filesystem::path& path,
                            const TrainAudit& audit) {
  json j = {{"strategy", audit.strategy_id},
            {"fold", audit.fold},
            {"batch_size", audit.batch_size},
            {"dice_mode", audit.dice_mode},
            {"augmented_pool_size", audit.augmented_pool_size},
            {"stat_source_ids", audit.stat_source_ids},
            {"patch_source_ids", audit.patch_source_ids},
            {"aug_donor_ids", audit.aug_donor_ids},
            {"aug_recipient_ids", audit.aug_recipient_ids}};
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << j.dump(2) << "\n";
}

}  // namespace petseg

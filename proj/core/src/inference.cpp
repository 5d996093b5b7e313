#include "petseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "petseg/unet.hpp"

namespace petseg {

TilingPlan plan_tiles(Dims3 volume_shape, Dims3 patch_size, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) {
    throw std::invalid_argument("plan_tiles: overlap must be in [0, 1)");
  }
  if (volume_shape.nx < 1 || volume_shape.ny < 1 || volume_shape.nz < 1 ||
      patch_size.nx < 1 || patch_size.ny < 1 || patch_size.nz < 1) {
    throw std::invalid_argument("plan_tiles: degenerate shape");
  }

  TilingPlan plan;
  plan.volume_shape = volume_shape;
  plan.patch_size = patch_size;
  plan.padded_shape = Dims3{std::max(volume_shape.nx, patch_size.nx),
                            std::max(volume_shape.ny, patch_size.ny),
                            std::max(volume_shape.nz, patch_size.nz)};

  auto axis_origins = [&](int padded, int patch, int* step_out) {
    const int step = std::max(
        1, static_cast<int>(std::ceil(patch * (1.0 - overlap))));
    *step_out = step;
    std::vector<int> origins;
    for (int o = 0;; o += step) {
      if (o + patch >= padded) {
        origins.push_back(padded - patch);  // shifted to end at the boundary
        break;
      }
      origins.push_back(o);
    }
    return origins;
  };

  int sx = 0, sy = 0, sz = 0;
  const auto ox = axis_origins(plan.padded_shape.nx, patch_size.nx, &sx);
  const auto oy = axis_origins(plan.padded_shape.ny, patch_size.ny, &sy);
  const auto oz = axis_origins(plan.padded_shape.nz, patch_size.nz, &sz);
  plan.step = Dims3{sx, sy, sz};
  for (int z : oz) {
    for (int y : oy) {
      for (int x : ox) {
        plan.tile_origins.push_back(Index3{x, y, z});
      }
    }
  }
  return plan;
}

WeightMap gaussian_weight_map(Dims3 patch_size, double sigma_scale,
                              double floor_eps) {
  if (!(sigma_scale > 0.0)) {
    throw std::invalid_argument("gaussian_weight_map: sigma_scale must be > 0");
  }
  auto axis_weights = [&](int n) {
    std::vector<double> w(n);
    const double c = (n - 1) / 2.0;
    const double sigma = sigma_scale * n;
    for (int i = 0; i < n; ++i) {
      const double t = (i - c) / sigma;
      w[i] = std::exp(-0.5 * t * t);
    }
    // Normalize so the maximum (the one or two center samples) is exactly 1.
    const double wmax = *std::max_element(w.begin(), w.end());
    for (auto& v : w) v /= wmax;
    return w;
  };
  const auto wx = axis_weights(patch_size.nx);
  const auto wy = axis_weights(patch_size.ny);
  const auto wz = axis_weights(patch_size.nz);

  WeightMap map;
  map.size = patch_size;
  map.w.resize(static_cast<std::size_t>(patch_size.count()));
  std::size_t i = 0;
  for (int z = 0; z < patch_size.nz; ++z) {
    for (int y = 0; y < patch_size.ny; ++y) {
      for (int x = 0; x < patch_size.nx; ++x, ++i) {
        map.w[i] = std::max(wx[x] * wy[y] * wz[z], floor_eps);
      }
    }
  }
  return map;
}

struct UNetTileModel::Scratch {
  UNet3d<float>::Workspace ws;
  UNet3d<float>::Activations acts;
};

UNetTileModel::UNetTileModel(std::shared_ptr<UNet3d<float>> net)
    : net_(std::move(net)), scratch_(std::make_shared<Scratch>()) {}

int UNetTileModel::in_channels() const { return net_->config().in_channels; }
int UNetTileModel::out_channels() const { return net_->config().out_channels; }

void UNetTileModel::predict_logits(const float* input, Dims3 patch,
                                   std::vector<float>& logits) const {
  nn::FeatureMap<float> x;
  x.resize(net_->config().in_channels, patch);
  std::copy_n(input, x.v.size(), x.v.begin());
  auto out = net_->forward(x, scratch_->ws, scratch_->acts);
  logits = std::move(out.logits.v);
}

namespace {

// Symmetric pad of a single volume's raw data into padded_shape.
std::vector<float> pad_volume(const VolumeGrid& vol, Dims3 padded,
                              float pad_value) {
  const Dims3 d = vol.dims();
  std::vector<float> out(static_cast<std::size_t>(padded.count()), pad_value);
  const int off_x = (padded.nx - d.nx) / 2;
  const int off_y = (padded.ny - d.ny) / 2;
  const int off_z = (padded.nz - d.nz) / 2;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      const std::int64_t src = vol.index(0, y, z);
      const std::int64_t dst =
          (off_x) +
          static_cast<std::int64_t>(padded.nx) *
              ((y + off_y) + static_cast<std::int64_t>(padded.ny) * (z + off_z));
      for (int x = 0; x < d.nx; ++x) {
        out[dst + x] = static_cast<float>(vol.data()[src + x]);
      }
    }
  }
  return out;
}

}  // namespace

VolumeGrid sliding_window_predict(std::span<const TileModel* const> models,
                                  const CaseRecord& rec,
                                  const TilingPlan& plan,
                                  const WeightMap& weights,
                                  const NormalizationRecord& normalization) {
  if (models.empty()) {
    throw std::invalid_argument("sliding_window_predict: empty model list");
  }
  if (!(weights.size == plan.patch_size)) {
    throw std::invalid_argument(
        "sliding_window_predict: weight map does not match patch size");
  }
  for (const TileModel* m : models) {
    if (m->in_channels() != 2) {
      throw std::invalid_argument(
          "sliding_window_predict: models must take CT+PET inputs");
    }
    if (m->out_channels() != models.front()->out_channels()) {
      throw std::invalid_argument(
          "sliding_window_predict: models disagree on out_channels");
    }
  }

  const CaseRecord normalized = normalize_case(rec, normalization);
  const Dims3 padded = plan.padded_shape;
  const Dims3 patch = plan.patch_size;

  // CT pads with its (normalized) minimum, PET with 0.
  float ct_pad = 0.0f;
  if (!normalized.ct.data().empty()) {
    ct_pad = static_cast<float>(*std::min_element(normalized.ct.data().begin(),
                                                  normalized.ct.data().end()));
  }
  const auto ct = pad_volume(normalized.ct, padded, ct_pad);
  const auto pet = pad_volume(normalized.pet, padded, 0.0f);

  const std::int64_t patch_n = patch.count();
  const int n_ch = models.front()->out_channels();
  std::vector<float> input(static_cast<std::size_t>(2 * patch_n));
  std::vector<float> logits;

  std::vector<double> ensemble(static_cast<std::size_t>(padded.count()), 0.0);
  std::vector<double> num(ensemble.size());
  std::vector<double> den(ensemble.size());
  std::vector<double> probs(static_cast<std::size_t>(patch_n));

  for (const TileModel* model : models) {
    std::fill(num.begin(), num.end(), 0.0);
    std::fill(den.begin(), den.end(), 0.0);
    for (const Index3& origin : plan.tile_origins) {
      // Gather the tile (always fully inside the padded volume).
      for (int z = 0; z < patch.nz; ++z) {
        for (int y = 0; y < patch.ny; ++y) {
          const std::int64_t src =
              (origin.x) +
              static_cast<std::int64_t>(padded.nx) *
                  ((origin.y + y) +
                   static_cast<std::int64_t>(padded.ny) * (origin.z + z));
          const std::int64_t dst =
              static_cast<std::int64_t>(patch.nx) *
              (y + static_cast<std::int64_t>(patch.ny) * z);
          std::copy_n(ct.begin() + src, patch.nx, input.begin() + dst);
          std::copy_n(pet.begin() + src, patch.nx,
                      input.begin() + patch_n + dst);
        }
      }
      model->predict_logits(input.data(), patch, logits);
      if (logits.size() != static_cast<std::size_t>(n_ch * patch_n)) {
        throw std::runtime_error(
            "sliding_window_predict: model returned wrong logit count");
      }

      // Foreground probability via softmax over channels, in double.
      for (std::int64_t i = 0; i < patch_n; ++i) {
        double max_logit = logits[i];
        for (int c = 1; c < n_ch; ++c) {
          max_logit = std::max(max_logit,
                               static_cast<double>(logits[c * patch_n + i]));
        }
        double sum = 0.0, fg = 0.0;
        for (int c = 0; c < n_ch; ++c) {
          const double e = std::exp(logits[c * patch_n + i] - max_logit);
          sum += e;
          if (c == 1) fg = e;
        }
        probs[i] = fg / sum;
      }

      std::size_t wi = 0;
      for (int z = 0; z < patch.nz; ++z) {
        for (int y = 0; y < patch.ny; ++y) {
          const std::int64_t dst =
              (origin.x) +
              static_cast<std::int64_t>(padded.nx) *
                  ((origin.y + y) +
                   static_cast<std::int64_t>(padded.ny) * (origin.z + z));
          const std::int64_t src =
              static_cast<std::int64_t>(patch.nx) *
              (y + static_cast<std::int64_t>(patch.ny) * z);
          for (int x = 0; x < patch.nx; ++x, ++wi) {
            num[dst + x] += weights.w[wi] * probs[src + x];
            den[dst + x] += weights.w[wi];
          }
        }
      }
    }
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
      ensemble[i] += num[i] / den[i];
    }
  }

  const double inv_models = 1.0 / static_cast<double>(models.size());
  VolumeGrid out = VolumeGrid::like(rec.ct);
  const Dims3 d = rec.ct.dims();
  const int off_x = (padded.nx - d.nx) / 2;
  const int off_y = (padded.ny - d.ny) / 2;
  const int off_z = (padded.nz - d.nz) / 2;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const std::int64_t src =
            (x + off_x) +
            static_cast<std::int64_t>(padded.nx) *
                ((y + off_y) + static_cast<std::int64_t>(padded.ny) *
                                   (z + off_z));
        // Quantize to float32 so identical-model ensembles are bit-exact.
        out.at(x, y, z) = static_cast<double>(
            static_cast<float>(ensemble[src] * inv_models));
      }
    }
  }
  return out;
}

VolumeGrid predict_case(std::span<const LoadedModel> models,
                        const CaseRecord& rec, const SlidingWindowConfig& cfg) {
  if (models.empty()) {
    throw std::invalid_argument("predict_case: empty model list");
  }
  const NormalizationRecord& norm = models.front().meta.normalization;
  for (const auto& m : models) {
    if (!(m.meta.normalization == norm)) {
      throw std::runtime_error(
          "predict_case: checkpoints carry different normalization records");
    }
    if (!(m.meta.config.patch_size == models.front().meta.config.patch_size)) {
      throw std::runtime_error("predict_case: checkpoints disagree on patch");
    }
  }
  const Dims3 patch = models.front().meta.config.patch_size;
  const TilingPlan plan = plan_tiles(rec.ct.dims(), patch, cfg.overlap);
  const WeightMap weights = gaussian_weight_map(patch, cfg.sigma_scale);

  std::vector<UNetTileModel> tile_models;
  tile_models.reserve(models.size());
  for (const auto& m : models) tile_models.emplace_back(m.net);
  std::vector<const TileModel*> ptrs;
  for (const auto& tm : tile_models) ptrs.push_back(&tm);
  return sliding_window_predict(ptrs, rec, plan, weights, norm);
}

VolumeGrid binarize(const VolumeGrid& prob, double threshold) {
  if (!prob.is_probability()) {
    throw std::invalid_argument("binarize: input is not a probability volume");
  }
  VolumeGrid out = VolumeGrid::like(prob);
  for (std::int64_t i = 0; i < prob.size(); ++i) {
    out.data()[i] = prob.data()[i] > threshold ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace petseg

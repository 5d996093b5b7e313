// Sliding-window full-volume prediction with Gaussian importance blending
// and equal-weight probability averaging across fold models.
//
// Volumes smaller than the patch are symmetrically padded to patch size and
// cropped back afterwards. Per model, tile probabilities accumulate as
// weight*prob into a numerator and weight into a denominator (double
// precision), so the result is independent of tile order to well below
// 1e-12; final probabilities are quantized to float32 precision, which makes
// ensemble idempotence exact.
#pragma once

#include <memory>
#include <span>
#include <vector>

#include "petseg/model.hpp"
#include "petseg/preprocess.hpp"
#include "petseg/volume.hpp"

namespace petseg {

struct TilingPlan {
  Dims3 volume_shape;
  Dims3 padded_shape;
  Dims3 patch_size;
  Dims3 step;
  std::vector<Index3> tile_origins;  // within the padded volume
};

// step = ceil(patch * (1 - overlap)) per axis; the last tile per axis is
// shifted to end exactly at the padded boundary.
TilingPlan plan_tiles(Dims3 volume_shape, Dims3 patch_size, double overlap);

struct WeightMap {
  Dims3 size;
  std::vector<double> w;  // strictly positive, max 1 at the center
};

WeightMap gaussian_weight_map(Dims3 patch_size, double sigma_scale,
                              double floor_eps = 1e-3);

// Anything that can turn a (in_channels x patch) input into logits. The
// input buffer is channel-major float, matching nn::FeatureMap.
class TileModel {
 public:
  virtual ~TileModel() = default;
  virtual int in_channels() const = 0;
  virtual int out_channels() const = 0;
  virtual void predict_logits(const float* input, Dims3 patch,
                              std::vector<float>& logits) const = 0;
};

class UNetTileModel : public TileModel {
 public:
  explicit UNetTileModel(std::shared_ptr<UNet3d<float>> net);
  int in_channels() const override;
  int out_channels() const override;
  void predict_logits(const float* input, Dims3 patch,
                      std::vector<float>& logits) const override;

 private:
  std::shared_ptr<UNet3d<float>> net_;
  struct Scratch;
  std::shared_ptr<Scratch> scratch_;
};

struct SlidingWindowConfig {
  double overlap = 0.5;
  double sigma_scale = 0.125;
  double threshold = 0.5;
};

// Normalizes the case per `normalization`, runs every model over the tiling
// plan and returns the ensemble foreground-probability volume (values in
// [0, 1], geometry of the input case).
VolumeGrid sliding_window_predict(std::span<const TileModel* const> models,
                                  const CaseRecord& rec,
                                  const TilingPlan& plan,
                                  const WeightMap& weights,
                                  const NormalizationRecord& normalization);

// Convenience for checkpoint ensembles: verifies all checkpoints share one
// normalization record, plans tiles from cfg and averages probabilities.
VolumeGrid predict_case(std::span<const LoadedModel> models,
                        const CaseRecord& rec, const SlidingWindowConfig& cfg);

// voxel = 1 iff prob > threshold (strictly).
VolumeGrid binarize(const VolumeGrid& prob, double threshold = 0.5);

}  // namespace petseg

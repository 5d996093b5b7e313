// Network configuration, parameter bookkeeping and checkpoint files.
//
// The architecture (built in unet.hpp): a residual encoder whose stages are
// conv-norm-act x2 blocks with identity/projection skips and strided-conv
// downsampling, and a decoder of transposed-conv upsampling + plain conv
// blocks with encoder skip concatenation. Instance normalization and leaky
// ReLU (slope 0.01) throughout; 1x1x1 output head (plus auxiliary heads per
// decoder resolution when deep supervision is on).
//
// Checkpoints are a single file: magic, version, a JSON header (config,
// strategy id, normalization record, fold index, parameter table) followed
// by raw little-endian float32 parameter data in header order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "petseg/preprocess.hpp"
#include "petseg/volume.hpp"

namespace petseg {

struct ModelConfig {
  int in_channels = 2;   // CT + PET
  int out_channels = 2;  // background, lesion
  int n_stages = 4;
  std::vector<int> features_per_stage{8, 16, 32, 64};
  std::vector<int> blocks_per_stage{1, 1, 1, 1};  // residual encoder blocks
  Dims3 patch_size{32, 32, 32};
  bool deep_supervision = false;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

constexpr int kFeatureCap = 320;
constexpr double kLeakySlope = 0.01;

enum class ParamKind { kConvWeight, kTconvWeight, kBias, kNormGain, kNormBias };

struct ParamShape {
  std::string name;
  std::vector<int> dims;
  ParamKind kind;

  std::int64_t numel() const;
};

// Enumerates every parameter of the architecture implied by `config`, in the
// canonical order used for initialization and checkpoints.
void for_each_parameter(const ModelConfig& config,
                        const std::function<void(const ParamShape&)>& fn);
std::vector<ParamShape> parameter_shapes(const ModelConfig& config);
std::int64_t parameter_count(const ModelConfig& config);

struct CheckpointMeta {
  ModelConfig config;
  std::string strategy_id;
  NormalizationRecord normalization;
  int fold_index = 0;
  int fold_count = 1;

  void validate() const;  // fold_index in [0, fold_count), normalization set
};

template <typename T>
class UNet3d;  // defined in unet.hpp

void save_checkpoint(const UNet3d<float>& net, const CheckpointMeta& meta,
                     const std::filesystem::path& path);

struct LoadedModel {
  CheckpointMeta meta;
  std::shared_ptr<UNet3d<float>> net;
};

LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace petseg

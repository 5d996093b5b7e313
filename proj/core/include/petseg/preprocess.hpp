// Intensity normalization. Two schemes are supported:
//
//  * the CT scheme: pool foreground intensities across the training fold,
//    clip to the [0.5, 99.5] percentiles of that pool, then standardize with
//    the pooled mean/std (dataset statistics, applied identically at
//    inference);
//  * per-volume z-score: (v - mean(v)) / max(std(v), eps).
//
// The foreground pool is the union over cases of the label dilated by one
// voxel (26-neighborhood); a fold with no positive voxels falls back to all
// voxels above the pool's 5th percentile.
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "petseg/volume.hpp"

namespace petseg {

struct CTNormStats {
  double mean = 0.0;
  double stddev = 1.0;
  double clip_low = 0.0;
  double clip_high = 0.0;
  std::int64_t source_voxel_count = 0;

  void validate() const;  // stddev > 0, clip_low <= clip_high
  bool operator==(const CTNormStats&) const = default;
};

enum class NormalizationMode {
  kCtSchemeBoth,         // CT scheme for both CT and PET (each with own stats)
  kCtForCtZscoreForPet,  // CT scheme for CT, per-volume z-score for PET
};

std::string to_string(NormalizationMode mode);
NormalizationMode parse_normalization_mode(const std::string& name);

enum class NormChannel { kCt, kPet };

constexpr double kZscoreEps = 1e-8;

// Percentile with linear interpolation between order statistics; `sorted`
// must be ascending, q in [0, 100].
double percentile_sorted(std::span<const double> sorted, double q);

CTNormStats compute_ct_norm_stats(std::span<const CaseRecord* const> cases,
                                  NormChannel channel);
CTNormStats compute_ct_norm_stats(std::span<const CaseRecord> cases,
                                  NormChannel channel);

VolumeGrid apply_ct_norm(const VolumeGrid& volume, const CTNormStats& stats);
VolumeGrid apply_zscore(const VolumeGrid& volume);

// Normalization settings recorded in checkpoints so inference reapplies the
// exact training-time scheme.
struct NormalizationRecord {
  NormalizationMode mode = NormalizationMode::kCtSchemeBoth;
  std::optional<CTNormStats> ct_stats;
  std::optional<CTNormStats> pet_stats;  // absent for z-score PET

  void validate() const;  // stats presence must match mode
  bool operator==(const NormalizationRecord&) const = default;
};

// Applies the per-channel scheme; the label passes through untouched.
CaseRecord normalize_case(const CaseRecord& rec,
                          const NormalizationRecord& record);

void write_norm_stats(const std::filesystem::path& path,
                      const NormalizationRecord& record);
NormalizationRecord read_norm_stats(const std::filesystem::path& path);

}  // namespace petseg

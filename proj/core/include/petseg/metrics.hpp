// Challenge-style evaluation: Dice overlap plus component-wise
// false-positive / false-negative volumes in milliliters (26-connectivity by
// default). FP volume sums predicted components that touch no ground truth;
// FN volume sums ground-truth components entirely missed by the prediction.
// Component counts are reported alongside as auxiliary output.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg {

struct CaseMetrics {
  std::string case_id;
  double dice = 0.0;
  double fp_volume_ml = 0.0;
  double fn_volume_ml = 0.0;
  int fp_components = 0;
  int fn_components = 0;
  std::int64_t pred_voxels = 0;
  std::int64_t gt_voxels = 0;
  int fold = -1;
};

struct MetricsReport {
  std::string strategy_id;
  std::string phase;  // e.g. "cv"
  std::vector<CaseMetrics> per_case;
  double mean_dice = 0.0;
  double mean_fp_volume_ml = 0.0;
  double mean_fn_volume_ml = 0.0;
};

// Both masks empty -> 1.0 (the prediction correctly found nothing);
// one-sided empty -> 0.0.
double dice_coefficient(const VolumeGrid& pred, const VolumeGrid& gt);

double false_positive_volume_ml(const VolumeGrid& pred, const VolumeGrid& gt,
                                int connectivity = 26);
double false_negative_volume_ml(const VolumeGrid& pred, const VolumeGrid& gt,
                                int connectivity = 26);

CaseMetrics evaluate_case(const VolumeGrid& pred_mask, const CaseRecord& rec,
                          int connectivity = 26);

// Unweighted mean over cases; throws on an empty list.
MetricsReport aggregate(std::vector<CaseMetrics> per_case,
                        std::string strategy_id, std::string phase);

void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const MetricsReport> reports);
void write_report_json(const std::filesystem::path& path,
                       std::span<const MetricsReport> reports, int folds_k,
                       std::uint64_t seed);
// Aligned text table, one row per strategy with Dice / FN / FP columns.
std::string format_study_table(std::span<const MetricsReport> reports);

}  // namespace petseg

// Lesion-mixing augmentation: carve a lesion-shaped region out of a donor
// case and blend it into a recipient case.
//
// Carve geometry: signed Euclidean distance (voxel units) of the selected
// donor lesion component; the carve region is {v : sd(v) <= lambda * D}
// where D = (max interior distance magnitude) + 3 voxels. lambda = 0 gives
// exactly the component; lambda in (0, 1] dilates it by up to D.
//
// Inside the carve region, CT and PET are alpha-blended (alpha weighting the
// donor) and the label is replaced by the donor's (union with the
// recipient's when label_union is set). Outside, the recipient passes
// through bit-identically.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg {

struct MixRecipe {
  std::string donor_id;
  std::string recipient_id;
  int component_id = 1;       // donor lesion component (1-based)
  double lambda_carve = 1.0;  // in (0, 1]
  double blend_alpha = 1.0;   // in (0, 1], weight of the donor inside R
  std::uint64_t rng_seed = 0;
  bool label_union = false;

  void validate() const;
};

// Defaults for recipe sampling in generate_augmented_set.
constexpr double kCarveLambdaMin = 0.5;
constexpr double kCarveLambdaMax = 1.0;
constexpr double kBlendAlphaMin = 0.5;
constexpr double kBlendAlphaMax = 1.0;
constexpr double kCarveMarginVoxels = 3.0;

// Binary carve mask at an explicit signed-distance threshold (voxel units).
VolumeGrid carve_region_at_threshold(const VolumeGrid& donor_label,
                                     int component_id, double threshold,
                                     int connectivity = 26);

// threshold = lambda_carve * D with D as documented above.
VolumeGrid carve_region(const VolumeGrid& donor_label, int component_id,
                        double lambda_carve, int connectivity = 26);

CaseRecord mix_cases(const CaseRecord& recipient, const CaseRecord& donor,
                     const MixRecipe& recipe, int connectivity = 26);

// Draws `count` recipes deterministically from rng_seed (stream i derives
// from (rng_seed, i), so generation order never matters), sampling donors
// uniformly from lesion-bearing cases and recipients uniformly from all
// cases. Output ids are "mix<i>_<donor>_into_<recipient>".
std::vector<CaseRecord> generate_augmented_set(
    std::span<const CaseRecord> fold_cases, int count, std::uint64_t rng_seed,
    std::vector<MixRecipe>* recipes_out = nullptr);

}  // namespace petseg

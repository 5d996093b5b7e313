// Patch extraction with out-of-bounds padding, and the inverse scatter used
// to place patch-shaped data back into a volume.
#pragma once

#include <vector>

#include "petseg/volume.hpp"

namespace petseg {

// Where a patch came from: start may be negative and start+size may exceed
// the volume; such voxels were filled with the pad value.
struct PatchGeometry {
  Index3 start;
  Dims3 size;
  Dims3 volume_dims;

  std::int64_t padded_voxel_count() const;
};

// Extracts a size-shaped patch centered at `center` (start = center -
// size/2, componentwise integer division). Out-of-bounds voxels get
// pad_value.
std::vector<double> extract_patch(const VolumeGrid& vol, Index3 center,
                                  Dims3 size, double pad_value,
                                  PatchGeometry* geometry = nullptr);

// Writes patch values back into `vol` at the patch's location; out-of-bounds
// patch voxels are dropped.
void scatter_patch(VolumeGrid& vol, const std::vector<double>& patch,
                   const PatchGeometry& geometry);

struct CasePatch {
  std::vector<double> ct;
  std::vector<double> pet;
  std::vector<double> label;  // padded with 0
  PatchGeometry geometry;
};

// CT and PET get their own pad values (after normalization, CT pads with the
// "air" minimum and PET with 0); the label always pads with 0.
CasePatch extract_case_patch(const CaseRecord& rec, Index3 center, Dims3 size,
                             double ct_pad, double pet_pad);

}  // namespace petseg

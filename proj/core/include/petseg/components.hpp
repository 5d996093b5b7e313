// Two-pass union-find connected component labeling for binary 3D masks,
// with 6 / 18 / 26 neighborhood connectivity.
#pragma once

#include <cstdint>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg {

struct ComponentLabeling {
  Dims3 dims;
  std::vector<std::int32_t> labels;  // 0 = background, components 1..count
  int component_count = 0;
  // Indexed by component id - 1.
  std::vector<std::int64_t> component_voxel_counts;

  std::int64_t voxel_count(int component_id) const {
    return component_voxel_counts.at(component_id - 1);
  }
};

// Components are numbered 1..count in first-encounter scan order (x fastest),
// which makes the labeling deterministic.
ComponentLabeling connected_components(const VolumeGrid& mask,
                                       int connectivity = 26);

// The neighbor offsets defining a connectivity class (all 6/18/26 of them).
std::vector<Index3> connectivity_offsets(int connectivity);

}  // namespace petseg

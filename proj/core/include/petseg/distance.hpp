// Exact Euclidean distance transforms on voxel grids (separable
// lower-envelope algorithm over squared distances). Distances are measured
// in voxel units on the index grid.
#pragma once

#include <cstdint>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg {

// Squared Euclidean distance from every voxel to the nearest foreground
// voxel (fg[i] != 0). Foreground voxels get 0; if there is no foreground the
// result is +inf everywhere.
std::vector<double> squared_distance_to_foreground(
    const std::vector<std::uint8_t>& fg, Dims3 dims);

// Signed distance to the foreground boundary: positive outside (distance to
// the nearest foreground voxel), negative inside (minus the distance to the
// nearest background voxel). The set {d <= 0} is exactly the foreground.
std::vector<double> signed_distance(const std::vector<std::uint8_t>& fg,
                                    Dims3 dims);

}  // namespace petseg

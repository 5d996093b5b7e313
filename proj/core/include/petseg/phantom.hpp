// Synthetic whole-body-style PET/CT phantoms: an ellipsoidal "body" on an
// air background in CT, a soft-tissue uptake background in PET, and
// axis-aligned ellipsoid lesions. Lesion intensities decay smoothly at the
// boundary while the ground-truth label stays hard, so labels remain exact.
#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "petseg/volume.hpp"

namespace petseg {

struct PhantomConfig {
  Dims3 grid_shape{32, 32, 32};
  std::array<double, 3> spacing{2.0, 2.0, 2.0};  // mm per voxel
  std::array<int, 2> lesion_count_range{1, 3};
  std::array<double, 2> lesion_radius_range_mm{4.0, 8.0};
  // Lesion uptake is drawn per lesion from this range; it must exceed the
  // PET background uptake.
  std::array<double, 2> pet_lesion_uptake_range{4.0, 8.0};
  double pet_background_uptake = 1.0;
  // Noise sigma in PET uptake units; CT noise uses 100x this value (HU
  // scale).
  double background_noise_sigma = 0.05;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Deterministic for a fixed config (including rng_seed). All intensities are
// snapped to float32-representable values so that saving to float32 NIfTI
// and reloading is the identity. When id is empty, "phantom_<seed>" is used.
CaseRecord generate_phantom(const PhantomConfig& config, std::string id = "");

}  // namespace petseg

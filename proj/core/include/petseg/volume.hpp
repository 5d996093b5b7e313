// 3D scalar volumes with voxel spacing and origin, plus the per-case
// CT/PET/label bundle everything else operates on.
//
// Axis convention used throughout the project: volumes are stored with x
// fastest and z slowest, i.e. linear index = x + nx*(y + ny*z). Voxel (i,j,k)
// is centered at origin + (i*sx, j*sy, k*sz) millimeters.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace petseg {

struct Dims3 {
  int nx = 1;
  int ny = 1;
  int nz = 1;

  bool operator==(const Dims3&) const = default;
  std::int64_t count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
};

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;

  bool operator==(const Index3&) const = default;
};

class VolumeGrid {
 public:
  VolumeGrid() = default;
  VolumeGrid(Dims3 dims, std::array<double, 3> spacing_mm,
             std::array<double, 3> origin_mm = {0.0, 0.0, 0.0});

  static VolumeGrid like(const VolumeGrid& other);  // zeros, same geometry

  Dims3 dims() const { return dims_; }
  const std::array<double, 3>& spacing() const { return spacing_; }
  const std::array<double, 3>& origin() const { return origin_; }
  std::int64_t size() const { return dims_.count(); }
  double voxel_volume_mm3() const {
    return spacing_[0] * spacing_[1] * spacing_[2];
  }

  std::int64_t index(int x, int y, int z) const {
    return x + static_cast<std::int64_t>(dims_.nx) *
                   (y + static_cast<std::int64_t>(dims_.ny) * z);
  }
  double at(int x, int y, int z) const { return data_[index(x, y, z)]; }
  double& at(int x, int y, int z) { return data_[index(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims_.nx && y >= 0 && y < dims_.ny && z >= 0 &&
           z < dims_.nz;
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_geometry(const VolumeGrid& other) const;
  bool is_binary() const;       // every value in {0, 1}
  bool is_probability() const;  // every value in [0, 1]

 private:
  Dims3 dims_{};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::array<double, 3> origin_{0.0, 0.0, 0.0};
  std::vector<double> data_;
};

// One patient case: CT + PET + binary lesion mask on a shared grid.
struct CaseRecord {
  std::string case_id;
  VolumeGrid ct;
  VolumeGrid pet;
  VolumeGrid label;
  bool is_synthetic = false;

  // Throws std::runtime_error on geometry mismatch or non-binary label.
  void validate() const;
  bool has_lesion() const;
};

}  // namespace petseg

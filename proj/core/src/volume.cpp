#include "petseg/volume.hpp"

#include <cmath>
#include <stdexcept>

namespace petseg {

VolumeGrid::VolumeGrid(Dims3 dims, std::array<double, 3> spacing_mm,
                       std::array<double, 3> origin_mm)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm) {
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
    throw std::invalid_argument("VolumeGrid: all dimensions must be >= 1");
  }
  for (double s : spacing_) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument(
          "VolumeGrid: spacing components must be finite and > 0");
    }
  }
  data_.assign(static_cast<std::size_t>(dims.count()), 0.0);
}

VolumeGrid VolumeGrid::like(const VolumeGrid& other) {
  return VolumeGrid(other.dims_, other.spacing_, other.origin_);
}

bool VolumeGrid::same_geometry(const VolumeGrid& other) const {
  return dims_ == other.dims_ && spacing_ == other.spacing_ &&
         origin_ == other.origin_;
}

bool VolumeGrid::is_binary() const {
  for (double v : data_) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

bool VolumeGrid::is_probability() const {
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

void CaseRecord::validate() const {
  if (!ct.same_geometry(pet) || !ct.same_geometry(label)) {
    throw std::runtime_error("case '" + case_id +
                             "': geometry mismatch among ct/pet/label");
  }
  if (!label.is_binary()) {
    throw std::runtime_error("case '" + case_id + "': non-binary label");
  }
}

bool CaseRecord::has_lesion() const {
  for (double v : label.data()) {
    if (v != 0.0) return true;
  }
  return false;
}

}  // namespace petseg

#include "petseg/patch.hpp"

#include <algorithm>
#include <stdexcept>

namespace petseg {

std::int64_t PatchGeometry::padded_voxel_count() const {
  std::int64_t inside = 1;
  const int starts[3] = {start.x, start.y, start.z};
  const int sizes[3] = {size.nx, size.ny, size.nz};
  const int volume[3] = {volume_dims.nx, volume_dims.ny, volume_dims.nz};
  for (int a = 0; a < 3; ++a) {
    const int lo = std::max(starts[a], 0);
    const int hi = std::min(starts[a] + sizes[a], volume[a]);
    inside *= std::max(hi - lo, 0);
  }
  return size.count() - inside;
}

std::vector<double> extract_patch(const VolumeGrid& vol, Index3 center,
                                  Dims3 size, double pad_value,
                                  PatchGeometry* geometry) {
  if (size.nx < 1 || size.ny < 1 || size.nz < 1) {
    throw std::invalid_argument("extract_patch: non-positive patch size");
  }
  const Index3 start{center.x - size.nx / 2, center.y - size.ny / 2,
                     center.z - size.nz / 2};
  if (geometry != nullptr) {
    *geometry = PatchGeometry{start, size, vol.dims()};
  }

  std::vector<double> patch(static_cast<std::size_t>(size.count()), pad_value);
  const Dims3 vd = vol.dims();
  const int x_lo = std::max(start.x, 0);
  const int x_hi = std::min(start.x + size.nx, vd.nx);
  for (int pz = 0; pz < size.nz; ++pz) {
    const int vz = start.z + pz;
    if (vz < 0 || vz >= vd.nz) continue;
    for (int py = 0; py < size.ny; ++py) {
      const int vy = start.y + py;
      if (vy < 0 || vy >= vd.ny) continue;
      if (x_lo >= x_hi) continue;
      const std::int64_t src = vol.index(x_lo, vy, vz);
      const std::int64_t dst =
          (x_lo - start.x) +
          static_cast<std::int64_t>(size.nx) *
              (py + static_cast<std::int64_t>(size.ny) * pz);
      std::copy_n(vol.data().begin() + src, x_hi - x_lo,
                  patch.begin() + dst);
    }
  }
  return patch;
}

void scatter_patch(VolumeGrid& vol, const std::vector<double>& patch,
                   const PatchGeometry& geometry) {
  const Dims3 size = geometry.size;
  if (patch.size() != static_cast<std::size_t>(size.count())) {
    throw std::invalid_argument("scatter_patch: patch/geometry size mismatch");
  }
  if (!(vol.dims() == geometry.volume_dims)) {
    throw std::invalid_argument("scatter_patch: volume dims mismatch");
  }
  const Dims3 vd = vol.dims();
  const Index3 start = geometry.start;
  const int x_lo = std::max(start.x, 0);
  const int x_hi = std::min(start.x + size.nx, vd.nx);
  for (int pz = 0; pz < size.nz; ++pz) {
    const int vz = start.z + pz;
    if (vz < 0 || vz >= vd.nz) continue;
    for (int py = 0; py < size.ny; ++py) {
      const int vy = start.y + py;
      if (vy < 0 || vy >= vd.ny) continue;
      if (x_lo >= x_hi) continue;
      const std::int64_t dst = vol.index(x_lo, vy, vz);
      const std::int64_t src =
          (x_lo - start.x) +
          static_cast<std::int64_t>(size.nx) *
              (py + static_cast<std::int64_t>(size.ny) * pz);
      std::copy_n(patch.begin() + src, x_hi - x_lo, vol.data().begin() + dst);
    }
  }
}

CasePatch extract_case_patch(const CaseRecord& rec, Index3 center, Dims3 size,
                             double ct_pad, double pet_pad) {
  CasePatch out;
  out.ct = extract_patch(rec.ct, center, size, ct_pad, &out.geometry);
  out.pet = extract_patch(rec.pet, center, size, pet_pad);
  out.label = extract_patch(rec.label, center, size, 0.0);
  return out;
}

}  // namespace petseg

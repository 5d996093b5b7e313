// Minimal NIfTI-1 reader/writer for single-file .nii / .nii.gz volumes.
// Covers what this project needs: 3D scalar data, spacing and origin in the
// header, gzip or raw storage, little- or big-endian sources. Orientation
// handling beyond an axis-aligned affine is out of scope; files with rotated
// s-forms are rejected rather than silently reinterpreted.
#pragma once

#include <string>

#include "petseg/volume.hpp"

namespace petseg {

enum class NiftiDType {
  kUint8,
  kInt16,
  kInt32,
  kFloat32,
  kFloat64,
};

// Writes `vol` to `path`. Output is gzip-compressed when the path ends in
// ".gz", raw otherwise. Values are cast to `dtype` (the caller picks a type
// that represents its data exactly, e.g. kUint8 for masks).
void write_nifti(const std::string& path, const VolumeGrid& vol,
                 NiftiDType dtype = NiftiDType::kFloat32);

// Reads a volume, converting voxel data to double and applying any
// scl_slope/scl_inter scaling. Throws std::runtime_error with a descriptive
// message on missing files, bad magic, unsupported datatypes or degenerate
// geometry.
VolumeGrid read_nifti(const std::string& path);

}  // namespace petseg

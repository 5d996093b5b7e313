#include "petseg/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace petseg {
namespace {

// nifti1.h layout; packs to exactly 348 bytes on all sane ABIs.
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b;
  float quatern_c;
  float quatern_d;
  float qoffset_x;
  float qoffset_y;
  float qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

std::int16_t dtype_code(NiftiDType t) {
  switch (t) {
    case NiftiDType::kUint8:
      return kDtUint8;
    case NiftiDType::kInt16:
      return kDtInt16;
    case NiftiDType::kInt32:
      return kDtInt32;
    case NiftiDType::kFloat32:
      return kDtFloat32;
    case NiftiDType::kFloat64:
      return kDtFloat64;
  }
  throw std::logic_error("unknown NiftiDType");
}

int dtype_bytes(std::int16_t code) {
  switch (code) {
    case kDtUint8:
      return 1;
    case kDtInt16:
      return 2;
    case kDtInt32:
    case kDtFloat32:
      return 4;
    case kDtFloat64:
      return 8;
    default:
      return 0;
  }
}

template <typename T>
void swap_bytes(T& value) {
  auto* p = reinterpret_cast<unsigned char*>(&value);
  for (std::size_t i = 0, j = sizeof(T) - 1; i < j; ++i, --j) {
    std::swap(p[i], p[j]);
  }
}

void swap_header(NiftiHeader& h) {
  swap_bytes(h.sizeof_hdr);
  swap_bytes(h.extents);
  swap_bytes(h.session_error);
  for (auto& d : h.dim) swap_bytes(d);
  swap_bytes(h.intent_p1);
  swap_bytes(h.intent_p2);
  swap_bytes(h.intent_p3);
  swap_bytes(h.intent_code);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  swap_bytes(h.slice_start);
  for (auto& p : h.pixdim) swap_bytes(p);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
  swap_bytes(h.slice_end);
  swap_bytes(h.cal_max);
  swap_bytes(h.cal_min);
  swap_bytes(h.slice_duration);
  swap_bytes(h.toffset);
  swap_bytes(h.glmax);
  swap_bytes(h.glmin);
  swap_bytes(h.qform_code);
  swap_bytes(h.sform_code);
  swap_bytes(h.quatern_b);
  swap_bytes(h.quatern_c);
  swap_bytes(h.quatern_d);
  swap_bytes(h.qoffset_x);
  swap_bytes(h.qoffset_y);
  swap_bytes(h.qoffset_z);
  for (auto& v : h.srow_x) swap_bytes(v);
  for (auto& v : h.srow_y) swap_bytes(v);
  for (auto& v : h.srow_z) swap_bytes(v);
}

class GzFile {
 public:
  GzFile(const std::string& path, const char* mode) {
    file_ = gzopen(path.c_str(), mode);
    if (file_ == nullptr) {
      throw std::runtime_error("cannot open '" + path + "'");
    }
  }
  ~GzFile() {
    if (file_ != nullptr) gzclose(file_);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  void write(const void* data, std::size_t bytes, const std::string& path) {
    if (gzwrite(file_, data, static_cast<unsigned>(bytes)) !=
        static_cast<int>(bytes)) {
      throw std::runtime_error("short write to '" + path + "'");
    }
  }
  void read(void* data, std::size_t bytes, const std::string& path) {
    if (gzread(file_, data, static_cast<unsigned>(bytes)) !=
        static_cast<int>(bytes)) {
      throw std::runtime_error("'" + path + "': truncated or unreadable file");
    }
  }
  void skip(std::size_t bytes, const std::string& path) {
    std::vector<char> junk(bytes);
    read(junk.data(), bytes, path);
  }

 private:
  gzFile file_ = nullptr;
};

template <typename T>
void write_cast(GzFile& f, const std::vector<double>& data,
                const std::string& path) {
  std::vector<T> buf(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    buf[i] = static_cast<T>(data[i]);
  }
  f.write(buf.data(), buf.size() * sizeof(T), path);
}

template <typename T>
void read_cast(GzFile& f, std::vector<double>& out, bool swapped,
               const std::string& path) {
  std::vector<T> buf(out.size());
  f.read(buf.data(), buf.size() * sizeof(T), path);
  if (swapped && sizeof(T) > 1) {
    for (auto& v : buf) swap_bytes(v);
  }
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out[i] = static_cast<double>(buf[i]);
  }
}

bool ends_with_gz(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

}  // namespace

void write_nifti(const std::string& path, const VolumeGrid& vol,
                 NiftiDType dtype) {
  NiftiHeader h;
  std::memset(&h, 0, sizeof(h));
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(vol.dims().nx);
  h.dim[2] = static_cast<std::int16_t>(vol.dims().ny);
  h.dim[3] = static_cast<std::int16_t>(vol.dims().nz);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = dtype_code(dtype);
  h.bitpix = static_cast<std::int16_t>(8 * dtype_bytes(h.datatype));
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) {
    h.pixdim[a + 1] = static_cast<float>(vol.spacing()[a]);
  }
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // millimeters
  h.qform_code = 0;
  h.sform_code = 1;
  h.srow_x[0] = static_cast<float>(vol.spacing()[0]);
  h.srow_x[3] = static_cast<float>(vol.origin()[0]);
  h.srow_y[1] = static_cast<float>(vol.spacing()[1]);
  h.srow_y[3] = static_cast<float>(vol.origin()[1]);
  h.srow_z[2] = static_cast<float>(vol.spacing()[2]);
  h.srow_z[3] = static_cast<float>(vol.origin()[2]);
  std::memcpy(h.magic, "n+1", 4);

  GzFile f(path, ends_with_gz(path) ? "wb" : "wbT");
  f.write(&h, sizeof(h), path);
  const char extension[4] = {0, 0, 0, 0};
  f.write(extension, 4, path);

  switch (dtype) {
    case NiftiDType::kUint8:
      write_cast<std::uint8_t>(f, vol.data(), path);
      break;
    case NiftiDType::kInt16:
      write_cast<std::int16_t>(f, vol.data(), path);
      break;
    case NiftiDType::kInt32:
      write_cast<std::int32_t>(f, vol.data(), path);
      break;
    case NiftiDType::kFloat32:
      write_cast<float>(f, vol.data(), path);
      break;
    case NiftiDType::kFloat64:
      write_cast<double>(f, vol.data(), path);
      break;
  }
}

VolumeGrid read_nifti(const std::string& path) {
  GzFile f(path, "rb");
  NiftiHeader h;
  f.read(&h, sizeof(h), path);

  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348) {
      throw std::runtime_error("'" + path + "': not a NIfTI-1 file");
    }
  }
  if (std::memcmp(h.magic, "n+1", 4) != 0) {
    if (std::memcmp(h.magic, "ni1", 4) == 0) {
      throw std::runtime_error("'" + path +
                               "': two-file NIfTI (.hdr/.img) not supported");
    }
    throw std::runtime_error("'" + path + "': bad NIfTI magic");
  }
  if (h.dim[0] < 3 || h.dim[0] > 7) {
    throw std::runtime_error("'" + path + "': unsupported dimensionality");
  }
  for (int d = 4; d <= h.dim[0]; ++d) {
    if (h.dim[d] > 1) {
      throw std::runtime_error("'" + path +
                               "': only 3D scalar volumes are supported");
    }
  }

  Dims3 dims{h.dim[1], h.dim[2], h.dim[3]};
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
    throw std::runtime_error("'" + path + "': degenerate dimensions");
  }
  std::array<double, 3> spacing;
  for (int a = 0; a < 3; ++a) {
    spacing[a] = static_cast<double>(h.pixdim[a + 1]);
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw std::runtime_error("'" + path + "': non-positive voxel spacing");
    }
  }

  std::array<double, 3> origin{0.0, 0.0, 0.0};
  if (h.sform_code > 0) {
    // Only axis-aligned, positively oriented affines are supported.
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const float v = rows[r][c];
        if (r == c ? v <= 0.0f : v != 0.0f) {
          throw std::runtime_error(
              "'" + path + "': non-axis-aligned orientation not supported");
        }
      }
      origin[r] = static_cast<double>(rows[r][3]);
      spacing[r] = static_cast<double>(rows[r][r]);
    }
  } else if (h.qform_code > 0) {
    if (h.quatern_b != 0.0f || h.quatern_c != 0.0f || h.quatern_d != 0.0f) {
      throw std::runtime_error(
          "'" + path + "': rotated q-form orientation not supported");
    }
    origin = {static_cast<double>(h.qoffset_x),
              static_cast<double>(h.qoffset_y),
              static_cast<double>(h.qoffset_z)};
  }

  const int elem_bytes = dtype_bytes(h.datatype);
  if (elem_bytes == 0) {
    throw std::runtime_error("'" + path + "': unsupported NIfTI datatype " +
                             std::to_string(h.datatype));
  }
  const auto offset = static_cast<std::int64_t>(h.vox_offset);
  if (offset < 348) {
    throw std::runtime_error("'" + path + "': bad vox_offset");
  }
  f.skip(static_cast<std::size_t>(offset) - sizeof(h), path);

  VolumeGrid vol(dims, spacing, origin);
  switch (h.datatype) {
    case kDtUint8:
      read_cast<std::uint8_t>(f, vol.data(), swapped, path);
      break;
    case kDtInt16:
      read_cast<std::int16_t>(f, vol.data(), swapped, path);
      break;
    case kDtInt32:
      read_cast<std::int32_t>(f, vol.data(), swapped, path);
      break;
    case kDtFloat32:
      read_cast<float>(f, vol.data(), swapped, path);
      break;
    case kDtFloat64:
      read_cast<double>(f, vol.data(), swapped, path);
      break;
  }

  if (h.scl_slope != 0.0f && (h.scl_slope != 1.0f || h.scl_inter != 0.0f)) {
    const double slope = h.scl_slope;
    const double inter = h.scl_inter;
    for (double& v : vol.data()) v = v * slope + inter;
  }
  return vol;
}

}  // namespace petseg

// Building blocks for the 3D segmentation network: channel-major feature
// maps, im2col+GEMM 3D convolution (kernel 1 or 3, stride 1 or 2, "same"
// padding), transposed convolution (kernel 2, stride 2), instance
// normalization and leaky ReLU, each with a hand-written backward pass.
//
// Everything is templated on the scalar type: float for training/inference,
// double for finite-difference gradient checks. Reductions run in double
// either way so results are deterministic and well conditioned.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg::nn {

template <typename T>
using MatrixRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatrixRM<T>>;

// Channel-major feature map: value(c, x,y,z) at c*dims.count() + index(x,y,z)
// with x fastest, matching VolumeGrid.
template <typename T>
struct FeatureMap {
  int channels = 0;
  Dims3 dims{};
  std::vector<T> v;

  void resize(int c, Dims3 d) {
    channels = c;
    dims = d;
    v.assign(static_cast<std::size_t>(c) * d.count(), T(0));
  }
  std::int64_t spatial() const { return dims.count(); }
  std::int64_t numel() const { return channels * spatial(); }
  T* ch(int c) { return v.data() + static_cast<std::size_t>(c) * spatial(); }
  const T* ch(int c) const {
    return v.data() + static_cast<std::size_t>(c) * spatial();
  }
};

inline Dims3 conv_out_dims(Dims3 in, int kernel, int stride) {
  const int pad = kernel / 2;
  auto out1 = [&](int n) { return (n + 2 * pad - kernel) / stride + 1; };
  return {out1(in.nx), out1(in.ny), out1(in.nz)};
}

// col is (cin * kernel^3) x n_out, row-major; row index
// ((ci*k + kz)*k + ky)*k + kx.
template <typename T>
void im2col(const FeatureMap<T>& x, int kernel, int stride, Dims3 out,
            std::vector<T>& col) {
  const int pad = kernel / 2;
  const std::int64_t n_out = out.count();
  const std::int64_t rows =
      static_cast<std::int64_t>(x.channels) * kernel * kernel * kernel;
  col.assign(static_cast<std::size_t>(rows * n_out), T(0));

  const Dims3 in = x.dims;
  for (int ci = 0; ci < x.channels; ++ci) {
    const T* src = x.ch(ci);
    for (int kz = 0; kz < kernel; ++kz) {
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const std::int64_t r =
              ((static_cast<std::int64_t>(ci) * kernel + kz) * kernel + ky) *
                  kernel +
              kx;
          T* dst_row = col.data() + r * n_out;
          for (int oz = 0; oz < out.nz; ++oz) {
            const int iz = oz * stride + kz - pad;
            if (iz < 0 || iz >= in.nz) continue;
            for (int oy = 0; oy < out.ny; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= in.ny) continue;
              T* dst = dst_row +
                       (static_cast<std::int64_t>(oz) * out.ny + oy) * out.nx;
              const T* line =
                  src + (static_cast<std::int64_t>(iz) * in.ny + iy) * in.nx;
              if (stride == 1) {
                const int ox_lo = std::max(0, pad - kx);
                const int ox_hi = std::min(out.nx, in.nx + pad - kx);
                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                  dst[ox] = line[ox + kx - pad];
                }
              } else {
                for (int ox = 0; ox < out.nx; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  if (ix >= 0 && ix < in.nx) dst[ox] = line[ix];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int kernel, int stride, Dims3 out,
                FeatureMap<T>& dx) {
  const int pad = kernel / 2;
  const std::int64_t n_out = out.count();
  const Dims3 in = dx.dims;
  for (int ci = 0; ci < dx.channels; ++ci) {
    T* dst_ch = dx.ch(ci);
    for (int kz = 0; kz < kernel; ++kz) {
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const std::int64_t r =
              ((static_cast<std::int64_t>(ci) * kernel + kz) * kernel + ky) *
                  kernel +
              kx;
          const T* src_row = col.data() + r * n_out;
          for (int oz = 0; oz < out.nz; ++oz) {
            const int iz = oz * stride + kz - pad;
            if (iz < 0 || iz >= in.nz) continue;
            for (int oy = 0; oy < out.ny; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= in.ny) continue;
              const T* src = src_row +
                             (static_cast<std::int64_t>(oz) * out.ny + oy) *
                                 out.nx;
              T* line = dst_ch +
                        (static_cast<std::int64_t>(iz) * in.ny + iy) * in.nx;
              if (stride == 1) {
                const int ox_lo = std::max(0, pad - kx);
                const int ox_hi = std::min(out.nx, in.nx + pad - kx);
                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                  line[ox + kx - pad] += src[ox];
                }
              } else {
                for (int ox = 0; ox < out.nx; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  if (ix >= 0 && ix < in.nx) line[ix] += src[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

// w laid out (cout, cin*k^3) row-major; b has cout entries.
template <typename T>
void conv3d_forward(const FeatureMap<T>& x, const std::vector<T>& w,
                    const std::vector<T>& b, int cout, int kernel, int stride,
                    FeatureMap<T>& y, std::vector<T>& col_scratch) {
  const Dims3 out = conv_out_dims(x.dims, kernel, stride);
  y.resize(cout, out);
  const std::int64_t rows =
      static_cast<std::int64_t>(x.channels) * kernel * kernel * kernel;
  const std::int64_t n = out.count();
  im2col(x, kernel, stride, out, col_scratch);

  CMapRM<T> w_map(w.data(), cout, rows);
  CMapRM<T> col_map(col_scratch.data(), rows, n);
  MapRM<T> y_map(y.v.data(), cout, n);
  y_map.noalias() = w_map * col_map;
  for (int co = 0; co < cout; ++co) {
    y_map.row(co).array() += b[co];
  }
}

// Adds into dw/db and (when dx != nullptr) into dx; callers zero dx buffers
// before the first accumulation.
template <typename T>
void conv3d_backward(const FeatureMap<T>& x, const std::vector<T>& w, int cout,
                     int kernel, int stride, const FeatureMap<T>& dy,
                     FeatureMap<T>* dx, std::vector<T>& dw, std::vector<T>& db,
                     std::vector<T>& col_scratch,
                     std::vector<T>& dcol_scratch) {
  const Dims3 out = dy.dims;
  const std::int64_t rows =
      static_cast<std::int64_t>(x.channels) * kernel * kernel * kernel;
  const std::int64_t n = out.count();
  im2col(x, kernel, stride, out, col_scratch);

  CMapRM<T> dy_map(dy.v.data(), cout, n);
  CMapRM<T> col_map(col_scratch.data(), rows, n);
  MapRM<T> dw_map(dw.data(), cout, rows);
  dw_map.noalias() += dy_map * col_map.transpose();
  for (int co = 0; co < cout; ++co) {
    db[co] += dy_map.row(co).sum();
  }

  if (dx != nullptr) {
    dcol_scratch.assign(static_cast<std::size_t>(rows * n), T(0));
    MapRM<T> dcol_map(dcol_scratch.data(), rows, n);
    CMapRM<T> w_map(w.data(), cout, rows);
    dcol_map.noalias() = w_map.transpose() * dy_map;
    col2im_add(dcol_scratch, kernel, stride, out, *dx);
  }
}

// Transposed conv, kernel 2, stride 2: output is exactly 2x the input in
// every axis and each output voxel receives exactly one (input voxel, kernel
// offset) contribution. w laid out (cin, cout, 8) row-major.
template <typename T>
void tconv3d_forward(const FeatureMap<T>& x, const std::vector<T>& w,
                     const std::vector<T>& b, int cout, FeatureMap<T>& y,
                     std::vector<T>& scratch) {
  const Dims3 in = x.dims;
  const Dims3 out{in.nx * 2, in.ny * 2, in.nz * 2};
  y.resize(cout, out);
  const std::int64_t n_in = in.count();
  const int cin = x.channels;

  std::vector<T> wd(static_cast<std::size_t>(cout) * cin);
  scratch.assign(static_cast<std::size_t>(cout) * n_in, T(0));
  CMapRM<T> x_map(x.v.data(), cin, n_in);
  for (int d = 0; d < 8; ++d) {
    const int dz = d >> 2, dy_off = (d >> 1) & 1, dx_off = d & 1;
    for (int co = 0; co < cout; ++co) {
      for (int ci = 0; ci < cin; ++ci) {
        wd[static_cast<std::size_t>(co) * cin + ci] =
            w[(static_cast<std::size_t>(ci) * cout + co) * 8 + d];
      }
    }
    CMapRM<T> wd_map(wd.data(), cout, cin);
    MapRM<T> yd_map(scratch.data(), cout, n_in);
    yd_map.noalias() = wd_map * x_map;

    for (int co = 0; co < cout; ++co) {
      const T* src = scratch.data() + static_cast<std::size_t>(co) * n_in;
      T* dst = y.ch(co);
      for (int z = 0; z < in.nz; ++z) {
        for (int yy = 0; yy < in.ny; ++yy) {
          const T* line = src + (static_cast<std::int64_t>(z) * in.ny + yy) *
                                    in.nx;
          T* out_line =
              dst + (static_cast<std::int64_t>(2 * z + dz) * out.ny +
                     (2 * yy + dy_off)) *
                        out.nx +
              dx_off;
          for (int xx = 0; xx < in.nx; ++xx) {
            out_line[2 * xx] = line[xx] + b[co];
          }
        }
      }
    }
  }
}

template <typename T>
void tconv3d_backward(const FeatureMap<T>& x, const std::vector<T>& w,
                      int cout, const FeatureMap<T>& dy, FeatureMap<T>* dx,
                      std::vector<T>& dw, std::vector<T>& db,
                      std::vector<T>& scratch) {
  const Dims3 in = x.dims;
  const Dims3 out = dy.dims;
  const std::int64_t n_in = in.count();
  const int cin = x.channels;

  for (int co = 0; co < cout; ++co) {
    double sum = 0.0;
    const T* p = dy.ch(co);
    for (std::int64_t i = 0; i < dy.spatial(); ++i) sum += p[i];
    db[co] += static_cast<T>(sum);
  }

  std::vector<T> wd(static_cast<std::size_t>(cout) * cin);
  std::vector<T> dwd(static_cast<std::size_t>(cout) * cin);
  scratch.assign(static_cast<std::size_t>(cout) * n_in, T(0));
  CMapRM<T> x_map(x.v.data(), cin, n_in);
  for (int d = 0; d < 8; ++d) {
    const int dz = d >> 2, dy_off = (d >> 1) & 1, dx_off = d & 1;
    // Gather the strided slice of dy for this kernel offset.
    for (int co = 0; co < cout; ++co) {
      T* dst = scratch.data() + static_cast<std::size_t>(co) * n_in;
      const T* src = dy.ch(co);
      for (int z = 0; z < in.nz; ++z) {
        for (int yy = 0; yy < in.ny; ++yy) {
          const T* in_line =
              src + (static_cast<std::int64_t>(2 * z + dz) * out.ny +
                     (2 * yy + dy_off)) *
                        out.nx +
              dx_off;
          T* out_line = dst + (static_cast<std::int64_t>(z) * in.ny + yy) *
                                  in.nx;
          for (int xx = 0; xx < in.nx; ++xx) {
            out_line[xx] = in_line[2 * xx];
          }
        }
      }
    }
    CMapRM<T> dyd_map(scratch.data(), cout, n_in);
    MapRM<T> dwd_map(dwd.data(), cout, cin);
    dwd_map.noalias() = dyd_map * x_map.transpose();
    for (int co = 0; co < cout; ++co) {
      for (int ci = 0; ci < cin; ++ci) {
        dw[(static_cast<std::size_t>(ci) * cout + co) * 8 + d] +=
            dwd[static_cast<std::size_t>(co) * cin + ci];
      }
    }
    if (dx != nullptr) {
      for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) {
          wd[static_cast<std::size_t>(co) * cin + ci] =
              w[(static_cast<std::size_t>(ci) * cout + co) * 8 + d];
        }
      }
      CMapRM<T> wd_map(wd.data(), cout, cin);
      MapRM<T> dx_map(dx->v.data(), cin, n_in);
      dx_map.noalias() += wd_map.transpose() * dyd_map;
    }
  }
}

constexpr double kInstanceNormEps = 1e-5;

// In-place: x becomes gamma * xhat + beta. xhat and 1/std are saved for the
// backward pass. Statistics are per channel over the spatial axes.
template <typename T>
void instance_norm_forward(FeatureMap<T>& x, const std::vector<T>& gamma,
                           const std::vector<T>& beta, std::vector<T>& xhat,
                           std::vector<double>& inv_std) {
  const std::int64_t n = x.spatial();
  xhat.resize(static_cast<std::size_t>(x.numel()));
  inv_std.assign(x.channels, 0.0);
  for (int c = 0; c < x.channels; ++c) {
    T* p = x.ch(c);
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) sum += p[i];
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = p[i] - mean;
      ss += d * d;
    }
    const double istd =
        1.0 / std::sqrt(ss / static_cast<double>(n) + kInstanceNormEps);
    inv_std[c] = istd;
    T* xh = xhat.data() + static_cast<std::size_t>(c) * n;
    const double g = gamma[c], b = beta[c];
    for (std::int64_t i = 0; i < n; ++i) {
      const double h = (p[i] - mean) * istd;
      xh[i] = static_cast<T>(h);
      p[i] = static_cast<T>(g * h + b);
    }
  }
}

template <typename T>
void instance_norm_backward(const std::vector<T>& xhat,
                            const std::vector<double>& inv_std,
                            const std::vector<T>& gamma,
                            const FeatureMap<T>& dy, FeatureMap<T>& dx,
                            std::vector<T>& dgamma, std::vector<T>& dbeta) {
  dx.resize(dy.channels, dy.dims);
  const std::int64_t n = dy.spatial();
  for (int c = 0; c < dy.channels; ++c) {
    const T* dyp = dy.ch(c);
    const T* xh = xhat.data() + static_cast<std::size_t>(c) * n;
    double s1 = 0.0, s2 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      s1 += dyp[i];
      s2 += static_cast<double>(dyp[i]) * xh[i];
    }
    dbeta[c] += static_cast<T>(s1);
    dgamma[c] += static_cast<T>(s2);
    const double m1 = s1 / static_cast<double>(n);
    const double m2 = s2 / static_cast<double>(n);
    const double scale = gamma[c] * inv_std[c];
    T* dxp = dx.ch(c);
    for (std::int64_t i = 0; i < n; ++i) {
      dxp[i] = static_cast<T>(scale * (dyp[i] - m1 - xh[i] * m2));
    }
  }
}

template <typename T>
void leaky_relu_forward(FeatureMap<T>& x, T slope) {
  for (auto& v : x.v) {
    if (v < T(0)) v *= slope;
  }
}

// In-place on dy, using the forward *output* y (sign(y) == sign(x) because
// the slope is positive).
template <typename T>
void leaky_relu_backward(const FeatureMap<T>& y, FeatureMap<T>& dy, T slope) {
  for (std::size_t i = 0; i < dy.v.size(); ++i) {
    if (y.v[i] < T(0)) dy.v[i] *= slope;
  }
}

template <typename T>
void concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b,
                     FeatureMap<T>& out) {
  out.resize(a.channels + b.channels, a.dims);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
}

template <typename T>
void split_channels(const FeatureMap<T>& cat, FeatureMap<T>& da,
                    FeatureMap<T>& db, int a_channels) {
  da.resize(a_channels, cat.dims);
  db.resize(cat.channels - a_channels, cat.dims);
  std::copy(cat.v.begin(), cat.v.begin() + da.v.size(), da.v.begin());
  std::copy(cat.v.begin() + da.v.size(), cat.v.end(), db.v.begin());
}

}  // namespace petseg::nn

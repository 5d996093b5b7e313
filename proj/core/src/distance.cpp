#include "petseg/distance.hpp"

#include <cmath>
#include <limits>

namespace petseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform of a sampled function f (Felzenszwalb &
// Huttenlocher). d[q] = min_p (q - p)^2 + f[p]. Positions with f == inf hold
// no parabola and are skipped.
void transform_1d(const double* f, int n, double* d, int* v, double* z) {
  int first = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] < kInf) {
      first = q;
      break;
    }
  }
  if (first < 0) {
    for (int q = 0; q < n; ++q) d[q] = kInf;
    return;
  }

  int k = 0;
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = first + 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s;
    while (true) {
      s = ((f[q] + static_cast<double>(q) * q) -
           (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
          (2.0 * (q - v[k]));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }

  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_to_foreground(
    const std::vector<std::uint8_t>& fg, Dims3 dims) {
  const auto n = static_cast<std::size_t>(dims.count());
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = fg[i] ? 0.0 : kInf;

  const int nmax = std::max({dims.nx, dims.ny, dims.nz});
  std::vector<double> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);

  auto idx = [&](int x, int y, int z_) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims.nx) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims.ny) * z_);
  };

  // Along x.
  for (int zz = 0; zz < dims.nz; ++zz) {
    for (int y = 0; y < dims.ny; ++y) {
      for (int x = 0; x < dims.nx; ++x) f[x] = dist[idx(x, y, zz)];
      transform_1d(f.data(), dims.nx, d.data(), v.data(), z.data());
      for (int x = 0; x < dims.nx; ++x) dist[idx(x, y, zz)] = d[x];
    }
  }
  // Along y.
  for (int zz = 0; zz < dims.nz; ++zz) {
    for (int x = 0; x < dims.nx; ++x) {
      for (int y = 0; y < dims.ny; ++y) f[y] = dist[idx(x, y, zz)];
      transform_1d(f.data(), dims.ny, d.data(), v.data(), z.data());
      for (int y = 0; y < dims.ny; ++y) dist[idx(x, y, zz)] = d[y];
    }
  }
  // Along z.
  for (int y = 0; y < dims.ny; ++y) {
    for (int x = 0; x < dims.nx; ++x) {
      for (int zz = 0; zz < dims.nz; ++zz) f[zz] = dist[idx(x, y, zz)];
      transform_1d(f.data(), dims.nz, d.data(), v.data(), z.data());
      for (int zz = 0; zz < dims.nz; ++zz) dist[idx(x, y, zz)] = d[zz];
    }
  }
  return dist;
}

std::vector<double> signed_distance(const std::vector<std::uint8_t>& fg,
                                    Dims3 dims) {
  const auto n = static_cast<std::size_t>(dims.count());
  std::vector<std::uint8_t> bg(n);
  for (std::size_t i = 0; i < n; ++i) bg[i] = fg[i] ? 0 : 1;

  const auto dist_to_fg = squared_distance_to_foreground(fg, dims);
  const auto dist_to_bg = squared_distance_to_foreground(bg, dims);

  std::vector<double> sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    sd[i] = fg[i] ? -std::sqrt(dist_to_bg[i]) : std::sqrt(dist_to_fg[i]);
  }
  return sd;
}

}  // namespace petseg

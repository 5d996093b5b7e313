#include "petseg/components.hpp"

#include <numeric>
#include <stdexcept>

namespace petseg {
namespace {

class DisjointSet {
 public:
  std::int32_t make_set() {
    parent_.push_back(static_cast<std::int32_t>(parent_.size()));
    return parent_.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];  // path halving
      x = parent_[x];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<std::int32_t> parent_;
};

int offset_order(const Index3& o) {
  return std::abs(o.x) + std::abs(o.y) + std::abs(o.z);
}

}  // namespace

std::vector<Index3> connectivity_offsets(int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
    throw std::invalid_argument("connectivity must be 6, 18 or 26");
  }
  const int max_order = connectivity == 6 ? 1 : connectivity == 18 ? 2 : 3;
  std::vector<Index3> offsets;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        Index3 o{dx, dy, dz};
        if ((dx | dy | dz) == 0 && dx == 0 && dy == 0 && dz == 0) continue;
        if (offset_order(o) >= 1 && offset_order(o) <= max_order) {
          offsets.push_back(o);
        }
      }
    }
  }
  return offsets;
}

ComponentLabeling connected_components(const VolumeGrid& mask,
                                       int connectivity) {
  if (!mask.is_binary()) {
    throw std::runtime_error("connected_components: non-binary input mask");
  }
  const auto all_offsets = connectivity_offsets(connectivity);
  // Backward neighbors only: offsets that precede the current voxel in scan
  // order (z, then y, then x).
  std::vector<Index3> backward;
  for (const auto& o : all_offsets) {
    if (o.z < 0 || (o.z == 0 && (o.y < 0 || (o.y == 0 && o.x < 0)))) {
      backward.push_back(o);
    }
  }

  const Dims3 d = mask.dims();
  ComponentLabeling out;
  out.dims = d;
  out.labels.assign(static_cast<std::size_t>(d.count()), 0);

  DisjointSet ds;
  std::vector<std::int32_t> provisional(static_cast<std::size_t>(d.count()),
                                        -1);
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const std::int64_t idx = mask.index(x, y, z);
        if (mask.data()[idx] == 0.0) continue;
        std::int32_t label = -1;
        for (const auto& o : backward) {
          const int nx = x + o.x, ny = y + o.y, nz = z + o.z;
          if (!mask.in_bounds(nx, ny, nz)) continue;
          const std::int32_t nb = provisional[mask.index(nx, ny, nz)];
          if (nb < 0) continue;
          if (label < 0) {
            label = nb;
          } else {
            ds.unite(label, nb);
          }
        }
        if (label < 0) label = ds.make_set();
        provisional[idx] = label;
      }
    }
  }

  // Second pass: map roots to consecutive ids in scan order.
  std::vector<std::int32_t> root_to_id;
  std::vector<std::int32_t> compact;
  for (std::size_t i = 0; i < provisional.size(); ++i) {
    if (provisional[i] < 0) continue;
    const std::int32_t root = ds.find(provisional[i]);
    if (static_cast<std::size_t>(root) >= root_to_id.size()) {
      root_to_id.resize(root + 1, 0);
    }
    if (root_to_id[root] == 0) {
      compact.push_back(root);
      root_to_id[root] = static_cast<std::int32_t>(compact.size());
    }
    out.labels[i] = root_to_id[root];
  }

  out.component_count = static_cast<int>(compact.size());
  out.component_voxel_counts.assign(out.component_count, 0);
  for (const auto label : out.labels) {
    if (label > 0) ++out.component_voxel_counts[label - 1];
  }
  return out;
}

}  // namespace petseg

#include "petseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "petseg/rng.hpp"

namespace petseg {
namespace {

constexpr double kAirHU = -1000.0;
constexpr double kSoftTissueHU = 40.0;
constexpr double kLesionContrastHU = 30.0;
constexpr double kBodyFraction = 0.42;      // body semi-axis / grid extent
constexpr double kLesionZoneFraction = 0.75;  // lesion centers stay inside
constexpr double kEdgeWidthMm = 2.0;          // smooth intensity falloff

struct Lesion {
  std::array<double, 3> center_mm;
  std::array<double, 3> radii_mm;
  double uptake;

  double max_radius() const {
    return std::max({radii_mm[0], radii_mm[1], radii_mm[2]});
  }
};

double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void PhantomConfig::validate() const {
  if (grid_shape.nx < 1 || grid_shape.ny < 1 || grid_shape.nz < 1) {
    throw std::invalid_argument("phantom: grid dimensions must be >= 1");
  }
  for (double s : spacing) {
    if (!(s > 0.0)) {
      throw std::invalid_argument("phantom: spacing must be > 0");
    }
  }
  if (lesion_count_range[0] < 0 ||
      lesion_count_range[1] < lesion_count_range[0]) {
    throw std::invalid_argument("phantom: bad lesion_count_range");
  }
  if (lesion_radius_range_mm[0] > lesion_radius_range_mm[1] ||
      lesion_radius_range_mm[0] <= 0.0) {
    throw std::invalid_argument("phantom: bad lesion_radius_range_mm");
  }
  if (pet_lesion_uptake_range[0] > pet_lesion_uptake_range[1]) {
    throw std::invalid_argument("phantom: bad pet_lesion_uptake_range");
  }
  if (pet_lesion_uptake_range[0] <= pet_background_uptake) {
    throw std::invalid_argument(
        "phantom: lesion uptake must exceed background uptake");
  }
  if (background_noise_sigma < 0.0) {
    throw std::invalid_argument("phantom: noise sigma must be >= 0");
  }
  if (lesion_count_range[1] > 0) {
    const double min_extent =
        std::min({grid_shape.nx * spacing[0], grid_shape.ny * spacing[1],
                  grid_shape.nz * spacing[2]});
    // The smallest lesion must fit inside the body region.
    if (2.0 * lesion_radius_range_mm[0] >= kBodyFraction * min_extent) {
      throw std::invalid_argument(
          "phantom: grid too small to contain the minimum lesion radius");
    }
  }
}

CaseRecord generate_phantom(const PhantomConfig& config, std::string id) {
  config.validate();
  Rng rng(config.rng_seed);
  Rng lesion_rng = rng.substream("lesions");
  Rng field_rng = rng.substream("fields");
  Rng noise_rng = rng.substream("noise");

  const Dims3 d = config.grid_shape;
  const auto& sp = config.spacing;
  const std::array<double, 3> extent_mm = {d.nx * sp[0], d.ny * sp[1],
                                           d.nz * sp[2]};
  const std::array<double, 3> center_mm = {
      (d.nx - 1) * sp[0] / 2.0, (d.ny - 1) * sp[1] / 2.0,
      (d.nz - 1) * sp[2] / 2.0};
  const std::array<double, 3> body_radii = {kBodyFraction * extent_mm[0],
                                            kBodyFraction * extent_mm[1],
                                            kBodyFraction * extent_mm[2]};

  // Place lesions with rejection sampling so they never touch: bounding
  // spheres must stay a voxel apart, keeping the label components disjoint.
  const int count = static_cast<int>(lesion_rng.uniform_int(
      config.lesion_count_range[0], config.lesion_count_range[1]));
  std::vector<Lesion> lesions;
  const double sep_margin = 1.5 * std::max({sp[0], sp[1], sp[2]});
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
      Lesion cand;
      const double base_r = lesion_rng.uniform(config.lesion_radius_range_mm[0],
                                               config.lesion_radius_range_mm[1]);
      for (int a = 0; a < 3; ++a) {
        cand.radii_mm[a] = base_r * lesion_rng.uniform(0.75, 1.25);
      }
      // Uniform direction inside the shrunken body ellipsoid.
      double ux, uy, uz, norm2;
      do {
        ux = lesion_rng.uniform(-1.0, 1.0);
        uy = lesion_rng.uniform(-1.0, 1.0);
        uz = lesion_rng.uniform(-1.0, 1.0);
        norm2 = ux * ux + uy * uy + uz * uz;
      } while (norm2 > 1.0 || norm2 == 0.0);
      for (int a = 0; a < 3; ++a) {
        const double u = (a == 0 ? ux : a == 1 ? uy : uz);
        cand.center_mm[a] =
            center_mm[a] + u * kLesionZoneFraction *
                               std::max(body_radii[a] - cand.radii_mm[a], 0.0);
      }
      cand.uptake = lesion_rng.uniform(config.pet_lesion_uptake_range[0],
                                       config.pet_lesion_uptake_range[1]);
      bool overlaps = false;
      for (const auto& other : lesions) {
        double dist2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double dd = cand.center_mm[a] - other.center_mm[a];
          dist2 += dd * dd;
        }
        const double min_dist =
            cand.max_radius() + other.max_radius() + sep_margin;
        if (dist2 < min_dist * min_dist) {
          overlaps = true;
          break;
        }
      }
      if (!overlaps) {
        lesions.push_back(cand);
        placed = true;
      }
    }
    if (!placed) {
      throw std::runtime_error(
          "phantom: could not place all lesions without overlap; grid too "
          "small or lesions too large");
    }
  }

  // Low-frequency intensity modulation shared by CT and PET backgrounds.
  struct Mode {
    std::array<double, 3> freq;
    double phase;
    double amp;
  };
  std::vector<Mode> modes(3);
  for (auto& m : modes) {
    for (int a = 0; a < 3; ++a) {
      m.freq[a] = field_rng.uniform(0.5, 1.5) / extent_mm[a];
    }
    m.phase = field_rng.uniform(0.0, 6.283185307179586);
    m.amp = field_rng.uniform(0.3, 1.0);
  }
  auto modulation = [&](double px, double py, double pz) {
    double v = 0.0;
    for (const auto& m : modes) {
      v += m.amp * std::cos(6.283185307179586 *
                                (m.freq[0] * px + m.freq[1] * py +
                                 m.freq[2] * pz) +
                            m.phase);
    }
    return v / 3.0;  // roughly in [-1, 1]
  };

  CaseRecord rec;
  rec.case_id = id.empty() ? "phantom_" + std::to_string(config.rng_seed)
                           : std::move(id);
  rec.is_synthetic = true;
  rec.ct = VolumeGrid(d, sp);
  rec.pet = VolumeGrid(d, sp);
  rec.label = VolumeGrid(d, sp);

  const double ct_noise = 100.0 * config.background_noise_sigma;
  const double pet_noise = config.background_noise_sigma;

  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const double px = x * sp[0], py = y * sp[1], pz = z * sp[2];
        // Body membership with a smooth edge.
        double rho2 = 0.0;
        rho2 += ((px - center_mm[0]) / body_radii[0]) *
                ((px - center_mm[0]) / body_radii[0]);
        rho2 += ((py - center_mm[1]) / body_radii[1]) *
                ((py - center_mm[1]) / body_radii[1]);
        rho2 += ((pz - center_mm[2]) / body_radii[2]) *
                ((pz - center_mm[2]) / body_radii[2]);
        const double rho = std::sqrt(rho2);
        // 1 deep inside the body, 0 outside, smooth over ~kEdgeWidthMm.
        const double mean_body_r =
            (body_radii[0] + body_radii[1] + body_radii[2]) / 3.0;
        const double edge = (1.0 - rho) * mean_body_r / kEdgeWidthMm;
        const double body = 1.0 / (1.0 + std::exp(-2.0 * edge));

        const double mod = modulation(px, py, pz);
        double ct = kAirHU + body * (kSoftTissueHU - kAirHU + 15.0 * mod);
        double pet =
            body * config.pet_background_uptake * (1.0 + 0.1 * mod);
        double label = 0.0;

        for (const auto& lesion : lesions) {
          double lr2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double p = (a == 0 ? px : a == 1 ? py : pz);
            const double dd = (p - lesion.center_mm[a]) / lesion.radii_mm[a];
            lr2 += dd * dd;
          }
          const double lrho = std::sqrt(lr2);
          if (lrho <= 1.0) {
            label = 1.0;
            ct += kLesionContrastHU;
            pet += lesion.uptake - body * config.pet_background_uptake;
          } else {
            // Gaussian falloff outside the hard label boundary.
            const double t = (lrho - 1.0) * lesion.max_radius() / kEdgeWidthMm;
            const double soft = std::exp(-t * t);
            ct += kLesionContrastHU * soft;
            pet += (lesion.uptake - config.pet_background_uptake) * soft;
          }
        }

        ct += ct_noise > 0.0 ? noise_rng.normal(0.0, ct_noise) : 0.0;
        pet += pet_noise > 0.0 ? noise_rng.normal(0.0, pet_noise) : 0.0;
        pet = std::max(pet, 0.0);

        const std::int64_t idx = rec.ct.index(x, y, z);
        rec.ct.data()[idx] = snap_f32(ct);
        rec.pet.data()[idx] = snap_f32(pet);
        rec.label.data()[idx] = label;
      }
    }
  }

  rec.validate();
  return rec;
}

}  // namespace petseg

#include "petseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "petseg/components.hpp"

using nlohmann::json;

namespace petseg {
namespace {

const VolumeGrid& channel_of(const CaseRecord& rec, NormChannel ch) {
  return ch == NormChannel::kCt ? rec.ct : rec.pet;
}

// Label dilated by one voxel, 26-neighborhood.
std::vector<std::uint8_t> dilated_label(const VolumeGrid& label) {
  const Dims3 d = label.dims();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(d.count()), 0);
  const auto offsets = connectivity_offsets(26);
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (label.at(x, y, z) == 0.0) continue;
        out[label.index(x, y, z)] = 1;
        for (const auto& o : offsets) {
          const int nx = x + o.x, ny = y + o.y, nz = z + o.z;
          if (label.in_bounds(nx, ny, nz)) out[label.index(nx, ny, nz)] = 1;
        }
      }
    }
  }
  return out;
}

json stats_to_json(const CTNormStats& s) {
  return json{{"mean", s.mean},
              {"std", s.stddev},
              {"clip_low", s.clip_low},
              {"clip_high", s.clip_high},
              {"source_voxel_count", s.source_voxel_count}};
}

CTNormStats stats_from_json(const json& j) {
  CTNormStats s;
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
  s.clip_low = j.at("clip_low").get<double>();
  s.clip_high = j.at("clip_high").get<double>();
  s.source_voxel_count = j.at("source_voxel_count").get<std::int64_t>();
  return s;
}

}  // namespace

void CTNormStats::validate() const {
  if (!(stddev > 0.0) || !std::isfinite(stddev)) {
    throw std::runtime_error("norm stats: std must be finite and > 0");
  }
  if (clip_low > clip_high) {
    throw std::runtime_error("norm stats: clip_low > clip_high");
  }
  if (source_voxel_count < 1) {
    throw std::runtime_error("norm stats: empty source pool");
  }
}

std::string to_string(NormalizationMode mode) {
  switch (mode) {
    case NormalizationMode::kCtSchemeBoth:
      return "ct_scheme_both";
    case NormalizationMode::kCtForCtZscoreForPet:
      return "ct_for_ct_zscore_for_pet";
  }
  throw std::logic_error("unknown NormalizationMode");
}

NormalizationMode parse_normalization_mode(const std::string& name) {
  if (name == "ct_scheme_both") return NormalizationMode::kCtSchemeBoth;
  if (name == "ct_for_ct_zscore_for_pet") {
    return NormalizationMode::kCtForCtZscoreForPet;
  }
  throw std::runtime_error("unknown normalization mode '" + name + "'");
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) {
    throw std::invalid_argument("percentile of empty range");
  }
  if (q <= 0.0) return sorted.front();
  if (q >= 100.0) return sorted.back();
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

CTNormStats compute_ct_norm_stats(std::span<const CaseRecord* const> cases,
                                  NormChannel channel) {
  if (cases.empty()) {
    throw std::runtime_error("norm stats: no cases");
  }
  std::vector<double> pool;
  for (const CaseRecord* rec : cases) {
    const VolumeGrid& vol = channel_of(*rec, channel);
    const auto fg = dilated_label(rec->label);
    for (std::size_t i = 0; i < fg.size(); ++i) {
      if (fg[i]) pool.push_back(vol.data()[i]);
    }
  }
  if (pool.empty()) {
    // Negative-only fold: use everything above the 5th intensity percentile.
    std::vector<double> all;
    for (const CaseRecord* rec : cases) {
      const auto& data = channel_of(*rec, channel).data();
      all.insert(all.end(), data.begin(), data.end());
    }
    std::sort(all.begin(), all.end());
    const double cutoff = percentile_sorted(all, 5.0);
    for (double v : all) {
      if (v > cutoff) pool.push_back(v);
    }
  }
  if (pool.empty()) {
    throw std::runtime_error("norm stats: empty intensity pool");
  }

  // Sorting makes the result independent of case order.
  std::sort(pool.begin(), pool.end());
  CTNormStats stats;
  stats.clip_low = percentile_sorted(pool, 0.5);
  stats.clip_high = percentile_sorted(pool, 99.5);
  stats.source_voxel_count = static_cast<std::int64_t>(pool.size());

  double sum = 0.0;
  for (double v : pool) sum += std::clamp(v, stats.clip_low, stats.clip_high);
  stats.mean = sum / static_cast<double>(pool.size());
  double ss = 0.0;
  for (double v : pool) {
    const double c = std::clamp(v, stats.clip_low, stats.clip_high);
    ss += (c - stats.mean) * (c - stats.mean);
  }
  stats.stddev = std::sqrt(ss / static_cast<double>(pool.size()));
  if (!(stats.stddev > 0.0)) {
    throw std::runtime_error("norm stats: zero variance intensity pool");
  }
  stats.validate();
  return stats;
}

CTNormStats compute_ct_norm_stats(std::span<const CaseRecord> cases,
                                  NormChannel channel) {
  std::vector<const CaseRecord*> ptrs;
  ptrs.reserve(cases.size());
  for (const auto& c : cases) ptrs.push_back(&c);
  return compute_ct_norm_stats(std::span<const CaseRecord* const>(ptrs),
                               channel);
}

VolumeGrid apply_ct_norm(const VolumeGrid& volume, const CTNormStats& stats) {
  stats.validate();
  VolumeGrid out = volume;
  for (double& v : out.data()) {
    v = (std::clamp(v, stats.clip_low, stats.clip_high) - stats.mean) /
        stats.stddev;
  }
  return out;
}

VolumeGrid apply_zscore(const VolumeGrid& volume) {
  const auto& data = volume.data();
  double sum = 0.0;
  for (double v : data) sum += v;
  const double mean = sum / static_cast<double>(data.size());
  double ss = 0.0;
  for (double v : data) ss += (v - mean) * (v - mean);
  const double stddev =
      std::max(std::sqrt(ss / static_cast<double>(data.size())), kZscoreEps);

  VolumeGrid out = volume;
  for (double& v : out.data()) v = (v - mean) / stddev;
  return out;
}

void NormalizationRecord::validate() const {
  if (!ct_stats.has_value()) {
    throw std::runtime_error("normalization record: missing CT stats");
  }
  ct_stats->validate();
  if (mode == NormalizationMode::kCtSchemeBoth) {
    if (!pet_stats.has_value()) {
      throw std::runtime_error(
          "normalization record: CT-scheme PET requires PET stats");
    }
    pet_stats->validate();
  }
}

CaseRecord normalize_case(const CaseRecord& rec,
                          const NormalizationRecord& record) {
  record.validate();
  CaseRecord out;
  out.case_id = rec.case_id;
  out.is_synthetic = rec.is_synthetic;
  out.label = rec.label;
  out.ct = apply_ct_norm(rec.ct, *record.ct_stats);
  out.pet = record.mode == NormalizationMode::kCtSchemeBoth
                ? apply_ct_norm(rec.pet, *record.pet_stats)
                : apply_zscore(rec.pet);
  return out;
}

void write_norm_stats(const std::filesystem::path& path,
                      const NormalizationRecord& record) {
  record.validate();
  json j = {{"mode", to_string(record.mode)},
            {"ct", stats_to_json(*record.ct_stats)}};
  if (record.pet_stats.has_value()) {
    j["pet"] = stats_to_json(*record.pet_stats);
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << j.dump(2) << "\n";
}

NormalizationRecord read_norm_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read '" + path.string() + "'");
  }
  const json j = json::parse(in);
  NormalizationRecord record;
  record.mode = parse_normalization_mode(j.at("mode").get<std::string>());
  record.ct_stats = stats_from_json(j.at("ct"));
  if (j.contains("pet")) record.pet_stats = stats_from_json(j.at("pet"));
  record.validate();
  return record;
}

}  // namespace petseg

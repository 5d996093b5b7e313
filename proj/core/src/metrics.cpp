#include "petseg/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "petseg/components.hpp"

using nlohmann::json;

namespace petseg {
namespace {

void check_pair(const VolumeGrid& pred, const VolumeGrid& gt) {
  if (!pred.same_geometry(gt)) {
    throw std::runtime_error("metrics: prediction/ground-truth geometry mismatch");
  }
  if (!pred.is_binary() || !gt.is_binary()) {
    throw std::runtime_error("metrics: non-binary mask");
  }
}

// Volume (ml) and count of components of `mask` that share no voxel with
// `other`.
std::pair<double, int> missed_components_ml(const VolumeGrid& mask,
                                            const VolumeGrid& other,
                                            int connectivity) {
  const auto labeling = connected_components(mask, connectivity);
  std::vector<char> touched(labeling.component_count + 1, 0);
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    if (labeling.labels[i] > 0 && other.data()[i] != 0.0) {
      touched[labeling.labels[i]] = 1;
    }
  }
  double volume_ml = 0.0;
  int count = 0;
  for (int c = 1; c <= labeling.component_count; ++c) {
    if (!touched[c]) {
      volume_ml += static_cast<double>(labeling.voxel_count(c)) *
                   mask.voxel_volume_mm3() / 1000.0;
      ++count;
    }
  }
  return {volume_ml, count};
}

}  // namespace

double dice_coefficient(const VolumeGrid& pred, const VolumeGrid& gt) {
  check_pair(pred, gt);
  std::int64_t inter = 0, p = 0, g = 0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const bool pv = pred.data()[i] != 0.0;
    const bool gv = gt.data()[i] != 0.0;
    p += pv;
    g += gv;
    inter += pv && gv;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

double false_positive_volume_ml(const VolumeGrid& pred, const VolumeGrid& gt,
                                int connectivity) {
  check_pair(pred, gt);
  return missed_components_ml(pred, gt, connectivity).first;
}

double false_negative_volume_ml(const VolumeGrid& pred, const VolumeGrid& gt,
                                int connectivity) {
  check_pair(pred, gt);
  return missed_components_ml(gt, pred, connectivity).first;
}

CaseMetrics evaluate_case(const VolumeGrid& pred_mask, const CaseRecord& rec,
                          int connectivity) {
  check_pair(pred_mask, rec.label);
  CaseMetrics m;
  m.case_id = rec.case_id;
  m.dice = dice_coefficient(pred_mask, rec.label);
  const auto fp = missed_components_ml(pred_mask, rec.label, connectivity);
  const auto fn = missed_components_ml(rec.label, pred_mask, connectivity);
  m.fp_volume_ml = fp.first;
  m.fp_components = fp.second;
  m.fn_volume_ml = fn.first;
  m.fn_components = fn.second;
  for (std::int64_t i = 0; i < pred_mask.size(); ++i) {
    m.pred_voxels += pred_mask.data()[i] != 0.0;
    m.gt_voxels += rec.label.data()[i] != 0.0;
  }
  return m;
}

MetricsReport aggregate(std::vector<CaseMetrics> per_case,
                        std::string strategy_id, std::string phase) {
  if (per_case.empty()) {
    throw std::invalid_argument("aggregate: empty case list");
  }
  MetricsReport r;
  r.strategy_id = std::move(strategy_id);
  r.phase = std::move(phase);
  r.per_case = std::move(per_case);
  for (const auto& c : r.per_case) {
    r.mean_dice += c.dice;
    r.mean_fp_volume_ml += c.fp_volume_ml;
    r.mean_fn_volume_ml += c.fn_volume_ml;
  }
  const double n = static_cast<double>(r.per_case.size());
  r.mean_dice /= n;
  r.mean_fp_volume_ml /= n;
  r.mean_fn_volume_ml /= n;
  return r;
}

void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const MetricsReport> reports) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << "strategy,phase,case_id,fold,dice,fp_volume_ml,fn_volume_ml,"
         "fp_components,fn_components,pred_voxels,gt_voxels\n";
  char line[512];
  for (const auto& r : reports) {
    for (const auto& c : r.per_case) {
      std::snprintf(line, sizeof(line),
                    "%s,%s,%s,%d,%.17g,%.17g,%.17g,%d,%d,%lld,%lld\n",
                    r.strategy_id.c_str(), r.phase.c_str(), c.case_id.c_str(),
                    c.fold, c.dice, c.fp_volume_ml, c.fn_volume_ml,
                    c.fp_components, c.fn_components,
                    static_cast<long long>(c.pred_voxels),
                    static_cast<long long>(c.gt_voxels));
      out << line;
    }
  }
}

void write_report_json(const std::filesystem::path& path,
                       std::span<const MetricsReport> reports, int folds_k,
                       std::uint64_t seed) {
  json strategies = json::array();
  for (const auto& r : reports) {
    json cases = json::array();
    for (const auto& c : r.per_case) {
      cases.push_back(json{{"case_id", c.case_id},
                           {"fold", c.fold},
                           {"dice", c.dice},
                           {"fp_volume_ml", c.fp_volume_ml},
                           {"fn_volume_ml", c.fn_volume_ml},
                           {"fp_components", c.fp_components},
                           {"fn_components", c.fn_components},
                           {"pred_voxels", c.pred_voxels},
                           {"gt_voxels", c.gt_voxels}});
    }
    strategies.push_back(json{{"strategy", r.strategy_id},
                              {"phase", r.phase},
                              {"dice", r.mean_dice},
                              {"fn_volume_ml", r.mean_fn_volume_ml},
                              {"fp_volume_ml", r.mean_fp_volume_ml},
                              {"cases", std::move(cases)}});
  }
  json j = {{"format_version", 1},
            {"folds_k", folds_k},
            {"seed", seed},
            {"strategies", std::move(strategies)}};
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << j.dump(2) << "\n";
}

std::string format_study_table(std::span<const MetricsReport> reports) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %8s %10s %10s\n", "Strategy",
                "Dice", "FN(ml)", "FP(ml)");
  s += line;
  s += std::string(42, '-') + "\n";
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-12s %8.4f %10.4f %10.4f\n",
                  r.strategy_id.c_str(), r.mean_dice, r.mean_fn_volume_ml,
                  r.mean_fp_volume_ml);
    s += line;
  }
  return s;
}

}  // namespace petseg

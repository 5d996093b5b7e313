// Directory-per-case dataset layout:
//
//   <dataset>/dataset.json            manifest: ids, lesion flags, fold split
//   <dataset>/<case_id>/ct.nii.gz
//   <dataset>/<case_id>/pet.nii.gz
//   <dataset>/<case_id>/label.nii.gz
//
// CT and PET are stored as float32, labels as uint8, so a save/load round
// trip reproduces geometry exactly and data bit-exactly at stored precision.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg {

struct ManifestEntry {
  std::string id;
  bool has_lesion = false;
  int fold = -1;  // -1 when the manifest carries no split
};

struct DatasetManifest {
  std::vector<ManifestEntry> cases;
  int folds_k = 0;  // 0 when no split is recorded
  std::uint64_t seed = 0;

  std::vector<std::string> case_ids() const;
  const ManifestEntry& entry(const std::string& id) const;
};

CaseRecord load_case(const std::filesystem::path& ct_path,
                     const std::filesystem::path& pet_path,
                     const std::filesystem::path& label_path,
                     std::string case_id = "");
CaseRecord load_case_dir(const std::filesystem::path& case_dir);

// Writes <dir>/<case_id>/{ct,pet,label}.nii.gz and returns the three paths.
std::array<std::filesystem::path, 3> save_case(
    const CaseRecord& rec, const std::filesystem::path& dataset_dir);

DatasetManifest read_manifest(const std::filesystem::path& dataset_dir);
void write_manifest(const std::filesystem::path& dataset_dir,
                    const DatasetManifest& manifest);

std::vector<CaseRecord> load_dataset(const std::filesystem::path& dataset_dir,
                                     const DatasetManifest& manifest);

}  // namespace petseg

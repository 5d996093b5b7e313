#include "petseg/dataset.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "petseg/nifti.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace petseg {

std::vector<std::string> DatasetManifest::case_ids() const {
  std::vector<std::string> ids;
  ids.reserve(cases.size());
  for (const auto& c : cases) ids.push_back(c.id);
  return ids;
}

const ManifestEntry& DatasetManifest::entry(const std::string& id) const {
  for (const auto& c : cases) {
    if (c.id == id) return c;
  }
  throw std::runtime_error("manifest has no case '" + id + "'");
}

CaseRecord load_case(const fs::path& ct_path, const fs::path& pet_path,
                     const fs::path& label_path, std::string case_id) {
  for (const auto* p : {&ct_path, &pet_path, &label_path}) {
    if (!fs::exists(*p)) {
      throw std::runtime_error("missing file '" + p->string() + "'");
    }
  }
  CaseRecord rec;
  rec.case_id = case_id.empty()
                    ? ct_path.parent_path().filename().string()
                    : std::move(case_id);
  rec.ct = read_nifti(ct_path.string());
  rec.pet = read_nifti(pet_path.string());
  rec.label = read_nifti(label_path.string());
  rec.validate();
  return rec;
}

CaseRecord load_case_dir(const fs::path& case_dir) {
  return load_case(case_dir / "ct.nii.gz", case_dir / "pet.nii.gz",
                   case_dir / "label.nii.gz", case_dir.filename().string());
}

std::array<fs::path, 3> save_case(const CaseRecord& rec,
                                  const fs::path& dataset_dir) {
  rec.validate();
  const fs::path case_dir = dataset_dir / rec.case_id;
  std::error_code ec;
  fs::create_directories(case_dir, ec);
  if (ec || !fs::is_directory(case_dir)) {
    throw std::runtime_error("cannot create directory '" + case_dir.string() +
                             "'");
  }
  std::array<fs::path, 3> paths = {case_dir / "ct.nii.gz",
                                   case_dir / "pet.nii.gz",
                                   case_dir / "label.nii.gz"};
  write_nifti(paths[0].string(), rec.ct, NiftiDType::kFloat32);
  write_nifti(paths[1].string(), rec.pet, NiftiDType::kFloat32);
  write_nifti(paths[2].string(), rec.label, NiftiDType::kUint8);
  return paths;
}

DatasetManifest read_manifest(const fs::path& dataset_dir) {
  const fs::path path = dataset_dir / "dataset.json";
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("missing manifest '" + path.string() + "'");
  }
  json j = json::parse(in);
  DatasetManifest m;
  m.folds_k = j.value("folds_k", 0);
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& c : j.at("cases")) {
    ManifestEntry e;
    e.id = c.at("id").get<std::string>();
    e.has_lesion = c.at("has_lesion").get<bool>();
    e.fold = c.value("fold", -1);
    m.cases.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const fs::path& dataset_dir,
                    const DatasetManifest& manifest) {
  json cases = json::array();
  for (const auto& c : manifest.cases) {
    json e = {{"id", c.id}, {"has_lesion", c.has_lesion}};
    if (c.fold >= 0) e["fold"] = c.fold;
    cases.push_back(std::move(e));
  }
  json j = {{"format_version", 1},
            {"seed", manifest.seed},
            {"cases", std::move(cases)}};
  if (manifest.folds_k > 0) j["folds_k"] = manifest.folds_k;

  const fs::path path = dataset_dir / "dataset.json";
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write manifest '" + path.string() + "'");
  }
  out << j.dump(2) << "\n";
}

std::vector<CaseRecord> load_dataset(const fs::path& dataset_dir,
                                     const DatasetManifest& manifest) {
  std::vector<CaseRecord> cases;
  cases.reserve(manifest.cases.size());
  for (const auto& e : manifest.cases) {
    cases.push_back(load_case_dir(dataset_dir / e.id));
  }
  return cases;
}

}  // namespace petseg

#include "petseg/cravemix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "petseg/components.hpp"
#include "petseg/distance.hpp"
#include "petseg/rng.hpp"

namespace petseg {
namespace {

std::vector<std::uint8_t> component_mask(const VolumeGrid& label,
                                         int component_id, int connectivity) {
  const auto labeling = connected_components(label, connectivity);
  if (component_id < 1 || component_id > labeling.component_count) {
    throw std::runtime_error("carve: component " +
                             std::to_string(component_id) +
                             " does not exist (donor has " +
                             std::to_string(labeling.component_count) + ")");
  }
  std::vector<std::uint8_t> mask(labeling.labels.size(), 0);
  for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
    mask[i] = labeling.labels[i] == component_id ? 1 : 0;
  }
  return mask;
}

}  // namespace

void MixRecipe::validate() const {
  if (!(lambda_carve > 0.0 && lambda_carve <= 1.0)) {
    throw std::invalid_argument("mix recipe: lambda_carve must be in (0,1]");
  }
  if (!(blend_alpha > 0.0 && blend_alpha <= 1.0)) {
    throw std::invalid_argument("mix recipe: blend_alpha must be in (0,1]");
  }
  if (component_id < 1) {
    throw std::invalid_argument("mix recipe: component_id must be >= 1");
  }
}

VolumeGrid carve_region_at_threshold(const VolumeGrid& donor_label,
                                     int component_id, double threshold,
                                     int connectivity) {
  const auto mask = component_mask(donor_label, component_id, connectivity);
  const auto sd = signed_distance(mask, donor_label.dims());
  VolumeGrid region = VolumeGrid::like(donor_label);
  for (std::size_t i = 0; i < sd.size(); ++i) {
    region.data()[i] = sd[i] <= threshold ? 1.0 : 0.0;
  }
  return region;
}

VolumeGrid carve_region(const VolumeGrid& donor_label, int component_id,
                        double lambda_carve, int connectivity) {
  if (!(lambda_carve > 0.0 && lambda_carve <= 1.0)) {
    throw std::invalid_argument("carve: lambda_carve must be in (0,1]");
  }
  const auto mask = component_mask(donor_label, component_id, connectivity);
  const auto sd = signed_distance(mask, donor_label.dims());
  double max_interior = 0.0;
  for (std::size_t i = 0; i < sd.size(); ++i) {
    if (mask[i]) max_interior = std::max(max_interior, -sd[i]);
  }
  const double extent = max_interior + kCarveMarginVoxels;
  VolumeGrid region = VolumeGrid::like(donor_label);
  for (std::size_t i = 0; i < sd.size(); ++i) {
    region.data()[i] = sd[i] <= lambda_carve * extent ? 1.0 : 0.0;
  }
  return region;
}

CaseRecord mix_cases(const CaseRecord& recipient, const CaseRecord& donor,
                     const MixRecipe& recipe, int connectivity) {
  recipe.validate();
  if (!recipient.ct.same_geometry(donor.ct)) {
    throw std::runtime_error("mix_cases: donor/recipient geometry mismatch");
  }
  const VolumeGrid region =
      carve_region(donor.label, recipe.component_id, recipe.lambda_carve,
                   connectivity);

  CaseRecord out;
  out.case_id = "mix_" + donor.case_id + "_into_" + recipient.case_id + "_s" +
                std::to_string(recipe.rng_seed);
  out.is_synthetic = true;
  out.ct = recipient.ct;
  out.pet = recipient.pet;
  out.label = recipient.label;

  const double alpha = recipe.blend_alpha;
  for (std::int64_t i = 0; i < region.size(); ++i) {
    if (region.data()[i] == 0.0) continue;
    out.ct.data()[i] =
        alpha * donor.ct.data()[i] + (1.0 - alpha) * recipient.ct.data()[i];
    out.pet.data()[i] =
        alpha * donor.pet.data()[i] + (1.0 - alpha) * recipient.pet.data()[i];
    out.label.data()[i] =
        recipe.label_union
            ? std::max(donor.label.data()[i], recipient.label.data()[i])
            : donor.label.data()[i];
  }
  out.validate();
  return out;
}

std::vector<CaseRecord> generate_augmented_set(
    std::span<const CaseRecord> fold_cases, int count, std::uint64_t rng_seed,
    std::vector<MixRecipe>* recipes_out) {
  if (count < 0) {
    throw std::invalid_argument("generate_augmented_set: negative count");
  }
  std::vector<std::size_t> lesion_bearing;
  for (std::size_t i = 0; i < fold_cases.size(); ++i) {
    if (fold_cases[i].has_lesion()) lesion_bearing.push_back(i);
  }
  if (count > 0 && lesion_bearing.empty()) {
    throw std::runtime_error(
        "generate_augmented_set: no lesion-bearing donor available");
  }

  std::vector<CaseRecord> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(rng_seed, static_cast<std::uint64_t>(i)));
    const auto& donor = fold_cases[lesion_bearing[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(lesion_bearing.size()) -
                               1))]];
    const auto& recipient = fold_cases[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(fold_cases.size()) - 1))];

    const auto labeling = connected_components(donor.label, 26);
    MixRecipe recipe;
    recipe.donor_id = donor.case_id;
    recipe.recipient_id = recipient.case_id;
    recipe.component_id =
        static_cast<int>(rng.uniform_int(1, labeling.component_count));
    recipe.lambda_carve = rng.uniform(kCarveLambdaMin, kCarveLambdaMax);
    recipe.blend_alpha = rng.uniform(kBlendAlphaMin, kBlendAlphaMax);
    recipe.rng_seed = rng_seed;

    CaseRecord mixed = mix_cases(recipient, donor, recipe);
    mixed.case_id = "mix" + std::to_string(i) + "_" + donor.case_id +
                    "_into_" + recipient.case_id;
    out.push_back(std::move(mixed));
    if (recipes_out != nullptr) recipes_out->push_back(std::move(recipe));
  }
  return out;
}

}  // namespace petseg

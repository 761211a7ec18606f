#include "curlm/curriculum.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "curlm/error.hpp"

namespace curlm::curriculum {

using tagging::TagVocabulary;

CurriculumName parse_curriculum_name(std::string_view text) {
  std::string key;
  for (char c : text) key.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "none" || key == "vanilla") return CurriculumName::None;
  if (key == "growing") return CurriculumName::Growing;
  if (key == "inwards") return CurriculumName::Inwards;
  if (key == "mmm_upos" || key == "mmm") return CurriculumName::MmmUpos;
  if (key == "mmm_sem") return CurriculumName::MmmSem;
  throw InvalidArgument("unknown curriculum '" + std::string(text) +
                        "'; valid: none, growing, inwards, mmm_upos, mmm_sem");
}

std::string_view to_string(CurriculumName name) {
  switch (name) {
    case CurriculumName::None: return "none";
    case CurriculumName::Growing: return "growing";
    case CurriculumName::Inwards: return "inwards";
    case CurriculumName::MmmUpos: return "mmm_upos";
    case CurriculumName::MmmSem: return "mmm_sem";
  }
  return "?";
}

Stage::Stage(std::int64_t start_step, std::int64_t end_step, tagging::CurriculumUnit unit,
             MaskingPolicy policy)
    : start_(start_step), end_(end_step), unit_(std::move(unit)), policy_(policy) {
  if (start_ >= end_) throw InvalidArgument("stage must satisfy start_step < end_step");
  const auto& vocab = TagVocabulary::standard();
  active_lookup_.assign(static_cast<std::size_t>(vocab.n_labels()), false);
  for (const auto& tag : tagging::expand_equivalents(unit_.tags)) {
    const auto id = vocab.id_of(tag);
    active_ids_.insert(id);
    active_lookup_[static_cast<std::size_t>(id)] = true;
  }
}

bool Stage::matches(tagging::TokenTags tags) const {
  auto hit = [&](tagging::TagId id) {
    return id > 0 && static_cast<std::size_t>(id) < active_lookup_.size() &&
           active_lookup_[static_cast<std::size_t>(id)];
  };
  return hit(tags.upos) || hit(tags.sem);
}

std::vector<std::string> stage_units(CurriculumName name) {
  switch (name) {
    case CurriculumName::None: return {"POS_ALL"};
    case CurriculumName::Growing: return {"NV", "GROWING1", "GROWING2", "POS_ALL"};
    case CurriculumName::Inwards: return {"INTJ", "INWARDS_CP", "INWARDS_TP", "POS_ALL"};
    case CurriculumName::MmmUpos: return {"NV", "MMM1", "MMM2", "POS_ALL"};
    case CurriculumName::MmmSem: return {"NV", "MMM1", "MMM2", "SEM1", "SEM2", "POS_ALL"};
  }
  return {};
}

std::vector<double> default_boundaries(CurriculumName name) {
  switch (name) {
    case CurriculumName::None: return {};
    case CurriculumName::MmmSem: return {0.10, 0.25, 0.45, 0.65, 0.85};
    default: return {0.10, 0.30, 0.60};
  }
}

CurriculumSchedule build_schedule(CurriculumName name, std::int64_t total_steps,
                                  std::optional<std::vector<double>> boundaries,
                                  MaskingPolicy policy) {
  if (total_steps <= 0) throw InvalidArgument("total_steps must be positive");
  const auto units = stage_units(name);
  const auto fractions = boundaries.value_or(default_boundaries(name));
  if (fractions.size() + 1 != units.size()) {
    throw InvalidArgument("curriculum " + std::string(to_string(name)) + " needs " +
                          std::to_string(units.size() - 1) + " boundaries, got " +
                          std::to_string(fractions.size()));
  }
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] < 1.0)) {
      throw InvalidArgument("boundaries must lie strictly inside (0, 1)");
    }
    if (i > 0 && !(fractions[i] > fractions[i - 1])) {
      throw InvalidArgument("boundaries must be strictly increasing");
    }
  }
  if (policy.active_ratio < 0.0 || policy.active_ratio > 1.0 || policy.base_ratio < 0.0 ||
      policy.base_ratio > 1.0) {
    throw InvalidArgument("masking ratios must lie in [0, 1]");
  }
  if (name == CurriculumName::None) policy.active_ratio = policy.base_ratio;

  std::vector<std::int64_t> edges{0};
  for (double f : fractions) {
    edges.push_back(static_cast<std::int64_t>(std::floor(f * static_cast<double>(total_steps) + 0.5)));
  }
  edges.push_back(total_steps);
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) {
      throw InvalidArgument("total_steps " + std::to_string(total_steps) +
                            " is too small: a curriculum stage would be empty");
    }
  }

  CurriculumSchedule schedule;
  schedule.name = name;
  schedule.total_steps = total_steps;
  for (std::size_t i = 0; i < units.size(); ++i) {
    schedule.stages.emplace_back(edges[i], edges[i + 1], tagging::resolve_unit(units[i]), policy);
  }
  return schedule;
}

std::size_t active_stage_index(const CurriculumSchedule& schedule, std::int64_t step) {
  if (step < 0 || step >= schedule.total_steps) {
    throw InvalidArgument("step " + std::to_string(step) + " outside [0, " +
                          std::to_string(schedule.total_steps) + ")");
  }
  auto it = std::upper_bound(schedule.stages.begin(), schedule.stages.end(), step,
                             [](std::int64_t s, const Stage& st) { return s < st.end_step(); });
  return static_cast<std::size_t>(it - schedule.stages.begin());
}

const Stage& active_stage(const CurriculumSchedule& schedule, std::int64_t step) {
  return schedule.stages[active_stage_index(schedule, step)];
}

std::set<tagging::TagId> active_tag_ids(const Stage& stage) { return stage.active_tag_ids(); }

std::vector<std::uint8_t> select_masks(std::span<const tagging::TokenTags> token_tags,
                                       std::span<const std::uint8_t> maskable, const Stage& stage,
                                       Rng& rng) {
  if (maskable.size() != token_tags.size()) {
    throw InvalidArgument("select_masks: maskable flags and tags differ in length");
  }
  std::vector<std::uint8_t> mask(token_tags.size(), 0);
  const auto& policy = stage.policy();
  for (std::size_t i = 0; i < token_tags.size(); ++i) {
    const double u = rng.uniform();
    if (!maskable[i]) continue;
    const double p = stage.matches(token_tags[i]) ? policy.active_ratio : policy.base_ratio;
    mask[i] = u < p ? 1 : 0;
  }
  return mask;
}

}  // namespace curlm::curriculum

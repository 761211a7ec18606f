#pragma once

// Objective-curriculum schedules: which tag unit is active at each training
// step, and the per-token masking decisions that follow from it.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curlm/rng.hpp"
#include "curlm/tagging.hpp"

namespace curlm::curriculum {

enum class CurriculumName { None, Growing, Inwards, MmmUpos, MmmSem };

/// Accepts none, growing, inwards, mmm_upos (or mmm), mmm_sem; case and
/// '-'/'_' insensitive.
CurriculumName parse_curriculum_name(std::string_view text);
std::string_view to_string(CurriculumName name);

struct MaskingPolicy {
  double active_ratio = 0.4;
  double base_ratio = 0.15;
};

/// Half-open step interval [start_step, end_step) with its unit and policy.
class Stage {
 public:
  Stage(std::int64_t start_step, std::int64_t end_step, tagging::CurriculumUnit unit,
        MaskingPolicy policy);

  std::int64_t start_step() const { return start_; }
  std::int64_t end_step() const { return end_; }
  const tagging::CurriculumUnit& unit() const { return unit_; }
  const MaskingPolicy& policy() const { return policy_; }

  /// True when the token's UPOS tag (under the CONJ/PRT equivalence) or its
  /// sem tag belongs to the unit.
  bool matches(tagging::TokenTags tags) const;

  /// Tag ids of the unit, equivalents included. Never contains 0.
  const std::set<tagging::TagId>& active_tag_ids() const { return active_ids_; }

 private:
  std::int64_t start_;
  std::int64_t end_;
  tagging::CurriculumUnit unit_;
  MaskingPolicy policy_;
  std::set<tagging::TagId> active_ids_;
  std::vector<bool> active_lookup_;
};

struct CurriculumSchedule {
  CurriculumName name = CurriculumName::None;
  std::vector<Stage> stages;
  std::int64_t total_steps = 0;
};

/// Unit order for each curriculum.
std::vector<std::string> stage_units(CurriculumName name);

/// Default stage boundaries as fractions of total steps.
std::vector<double> default_boundaries(CurriculumName name);

/// Boundary steps are round-half-up(fraction * total_steps). Throws
/// InvalidArgument for non-increasing or out-of-range fractions, a wrong
/// count, or a total too small to give every stage at least one step.
/// The None curriculum masks every token at policy.base_ratio.
CurriculumSchedule build_schedule(CurriculumName name, std::int64_t total_steps,
                                  std::optional<std::vector<double>> boundaries = std::nullopt,
                                  MaskingPolicy policy = {});

/// Index of the stage containing `step`; throws InvalidArgument when out of range.
std::size_t active_stage_index(const CurriculumSchedule& schedule, std::int64_t step);
const Stage& active_stage(const CurriculumSchedule& schedule, std::int64_t step);

std::set<tagging::TagId> active_tag_ids(const Stage& stage);

/// One Bernoulli draw per position, in order (positions that are not
/// maskable still consume a draw). Matching tokens are masked with
/// active_ratio, the rest with base_ratio; non-maskable positions never.
std::vector<std::uint8_t> select_masks(std::span<const tagging::TokenTags> token_tags,
                                       std::span<const std::uint8_t> maskable, const Stage& stage,
                                       Rng& rng);

}  // namespace curlm::curriculum

#pragma once

// Tag inventory, curriculum units and word-to-subword tag projection.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "curlm/tokenizer.hpp"

namespace curlm::tagging {

using TagId = std::int32_t;
inline constexpr TagId kNoTag = 0;

/// Fixed registry of UPOS tags (including the legacy PRT and CONJ) and coarse
/// semantic tags. Ids are assigned in sorted order, UPOS first, starting at 1;
/// id 0 means "no tag / inactive".
class TagVocabulary {
 public:
  static const TagVocabulary& standard();

  const std::vector<std::string>& upos_tags() const { return upos_; }
  const std::vector<std::string>& sem_tags() const { return sem_; }

  std::optional<TagId> find(std::string_view tag) const;
  TagId id_of(std::string_view tag) const;  // throws InvalidArgument
  const std::string& name_of(TagId id) const;
  bool is_upos(TagId id) const { return id >= 1 && id <= static_cast<TagId>(upos_.size()); }
  bool is_sem(TagId id) const { return id > static_cast<TagId>(upos_.size()) && id < n_labels(); }

  /// Number of tag-head labels: every registered tag plus id 0.
  int n_labels() const { return static_cast<int>(upos_.size() + sem_.size()) + 1; }

  /// All tag names in id order (index 0 is the empty string).
  std::vector<std::string> names_by_id() const;

 private:
  TagVocabulary(std::vector<std::string> upos, std::vector<std::string> sem);
  std::vector<std::string> upos_;
  std::vector<std::string> sem_;
};

struct CurriculumUnit {
  std::string name;
  std::set<std::string> tags;

  bool operator==(const CurriculumUnit&) const = default;
};

/// The unit names understood by resolve_unit.
const std::vector<std::string>& unit_names();

/// Throws InvalidArgument listing the valid names when `name` is unknown.
CurriculumUnit resolve_unit(std::string_view name);

/// Legacy-tag equivalence applied when matching a word's tag against a unit:
/// a unit holding CONJ also matches CCONJ and SCONJ, PRT also matches PART.
std::set<std::string> expand_equivalents(const std::set<std::string>& tags);

struct TaggedWord {
  std::string surface;
  std::string upos;
  std::optional<std::string> sem;

  bool operator==(const TaggedWord&) const = default;
};

struct TaggedSentence {
  std::vector<TaggedWord> words;

  std::string text() const;  // surfaces joined by single spaces
};

/// Tab-separated `token<TAB>upos<TAB>sem` rows, blank line between sentences,
/// `_` for an absent sem tag. Throws ParseError with the line number on a
/// wrong column count or an unregistered tag.
std::vector<TaggedSentence> load_tagged_corpus(std::istream& input);
std::vector<TaggedSentence> load_tagged_corpus_file(const std::string& path);
void write_tagged_corpus(std::ostream& out, const std::vector<TaggedSentence>& sentences);

struct TokenTags {
  TagId upos = kNoTag;
  TagId sem = kNoTag;

  bool operator==(const TokenTags&) const = default;
};

/// Every subword inherits its source word's tags. Throws InvalidArgument when
/// the tokenization does not reference exactly the sentence's words.
std::vector<TokenTags> align_tags_to_subwords(const TaggedSentence& sentence,
                                              const TokenizedSentence& tokenized);

}  // namespace curlm::tagging

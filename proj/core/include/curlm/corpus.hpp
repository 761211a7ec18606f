#pragma once

// Ingestion of child-directed-speech transcripts and construction of the
// age-ordered training corpus.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace curlm::corpus {

enum class SpeakerRole { TargetChild, Caregiver, Other };

enum class TranscriptFormat { Jsonl, ChatLite };

struct Utterance {
  SpeakerRole speaker_role = SpeakerRole::Caregiver;
  int child_age_months = 0;
  std::string text;
  std::string source_id;

  bool operator==(const Utterance&) const = default;
};

struct AgeOrderedCorpus {
  std::vector<Utterance> utterances;
  int cutoff_months = 72;
};

struct CorpusStats {
  std::int64_t n_utterances = 0;
  std::int64_t n_tokens = 0;
  std::int64_t vocab_size = 0;
  double mean_sentence_length = 0.0;

  bool operator==(const CorpusStats&) const = default;
};

/// CHILDES speaker code (without the leading '*') to role. `CHI` is the
/// target child; sibling and peer codes map to Other; every other code is
/// treated as an adult caregiver.
SpeakerRole speaker_role_from_code(std::string_view code);

/// Parses `y;mm` or `y;mm.dd` into months (y*12 + mm, days truncated).
int parse_age_months(std::string_view age);

/// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Utterances whose text is empty after normalization are skipped.
/// Throws ParseError carrying the line number on malformed input, and when a
/// ChatLite transcript has an utterance before any `@Age:` header.
std::vector<Utterance> parse_transcripts(std::istream& input, TranscriptFormat format,
                                         std::string_view source_name = "input");

/// Keeps every non-TargetChild utterance with age < cutoff_months, stably
/// sorted by age. `keep_other` = false additionally drops SpeakerRole::Other.
AgeOrderedCorpus build_age_ordered_corpus(std::vector<Utterance> utterances, int cutoff_months,
                                          bool keep_other = true);

CorpusStats corpus_stats(const AgeOrderedCorpus& corpus);
CorpusStats corpus_stats(const std::vector<std::string>& lines);

/// One utterance per line, in corpus order.
void write_corpus_text(std::ostream& out, const AgeOrderedCorpus& corpus);

std::vector<std::string> read_lines(std::istream& in);

std::string_view to_string(SpeakerRole role);

}  // namespace curlm::corpus

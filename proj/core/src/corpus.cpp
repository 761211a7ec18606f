#include "curlm/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "curlm/error.hpp"

namespace curlm::corpus {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

int parse_int(std::string_view s, std::string_view what) {
  int value = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw InvalidArgument("bad " + std::string(what) + " in age '" + std::string(s) + "'");
  }
  return value;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<Utterance> parse_jsonl(std::istream& input, std::string_view source_name) {
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    strip_cr(line);
    if (normalize_whitespace(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
    try {
      Utterance u;
      if (!obj.contains("speaker") || !obj["speaker"].is_string()) {
        throw ParseError("missing string field 'speaker'", line_no);
      }
      u.speaker_role = speaker_role_from_code(obj["speaker"].get<std::string>());
      if (obj.contains("age_months")) {
        if (!obj["age_months"].is_number_integer() || obj["age_months"].get<long long>() < 0) {
          throw ParseError("'age_months' must be a non-negative integer", line_no);
        }
        u.child_age_months = obj["age_months"].get<int>();
      } else if (obj.contains("age") && obj["age"].is_string()) {
        u.child_age_months = parse_age_months(obj["age"].get<std::string>());
      } else {
        throw ParseError("missing 'age_months' or 'age'", line_no);
      }
      if (!obj.contains("text") || !obj["text"].is_string()) {
        throw ParseError("missing string field 'text'", line_no);
      }
      u.text = normalize_whitespace(obj["text"].get<std::string>());
      if (obj.contains("source") && obj["source"].is_string()) {
        u.source_id = obj["source"].get<std::string>();
      } else {
        u.source_id = std::string(source_name);
      }
      if (u.text.empty()) continue;
      out.push_back(std::move(u));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::vector<Utterance> parse_chat_lite(std::istream& input, std::string_view source_name) {
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  int transcript = 0;
  int current_age = -1;
  auto source = [&] { return std::string(source_name) + "#" + std::to_string(transcript); };

  while (std::getline(input, line)) {
    ++line_no;
    strip_cr(line);
    std::string_view view(line);
    if (view.starts_with("@Begin")) {
      if (!out.empty() || current_age >= 0) ++transcript;
      current_age = -1;
      continue;
    }
    if (view.starts_with("@Age:")) {
      try {
        current_age = parse_age_months(normalize_whitespace(view.substr(5)));
      } catch (const Error& e) {
        throw ParseError(e.what(), line_no);
      }
      continue;
    }
    if (!view.starts_with("*")) continue;
    const auto colon = view.find(':');
    if (colon == std::string_view::npos || colon == 1) {
      throw ParseError("utterance line needs '*CODE:'", line_no);
    }
    const auto code = view.substr(1, colon - 1);
    if (std::any_of(code.begin(), code.end(), is_space)) {
      throw ParseError("speaker code contains whitespace", line_no);
    }
    if (current_age < 0) {
      throw ParseError("missing @Age header for transcript " + source(), line_no);
    }
    Utterance u;
    u.speaker_role = speaker_role_from_code(code);
    u.child_age_months = current_age;
    u.text = normalize_whitespace(view.substr(colon + 1));
    u.source_id = source();
    if (u.text.empty()) continue;
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

SpeakerRole speaker_role_from_code(std::string_view code) {
  if (code == "CHI") return SpeakerRole::TargetChild;
  static constexpr std::array<std::string_view, 6> kPeers{"BRO", "SIS", "SIB", "COU", "CHI2", "PLA"};
  if (std::find(kPeers.begin(), kPeers.end(), code) != kPeers.end()) return SpeakerRole::Other;
  return SpeakerRole::Caregiver;
}

std::string_view to_string(SpeakerRole role) {
  switch (role) {
    case SpeakerRole::TargetChild: return "TargetChild";
    case SpeakerRole::Caregiver: return "Caregiver";
    case SpeakerRole::Other: return "Other";
  }
  return "?";
}

int parse_age_months(std::string_view age) {
  const auto semi = age.find(';');
  if (semi == std::string_view::npos) {
    throw InvalidArgument("age '" + std::string(age) + "' is not in y;mm form");
  }
  const int years = parse_int(age.substr(0, semi), "years");
  auto rest = age.substr(semi + 1);
  if (const auto dot = rest.find('.'); dot != std::string_view::npos) rest = rest.substr(0, dot);
  const int months = rest.empty() ? 0 : parse_int(rest, "months");
  if (years < 0 || months < 0 || months > 11) {
    throw InvalidArgument("age '" + std::string(age) + "' out of range");
  }
  return years * 12 + months;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<Utterance> parse_transcripts(std::istream& input, TranscriptFormat format,
                                         std::string_view source_name) {
  return format == TranscriptFormat::Jsonl ? parse_jsonl(input, source_name)
                                           : parse_chat_lite(input, source_name);
}

AgeOrderedCorpus build_age_ordered_corpus(std::vector<Utterance> utterances, int cutoff_months,
                                          bool keep_other) {
  if (cutoff_months <= 0) throw InvalidArgument("cutoff_months must be positive");
  AgeOrderedCorpus corpus;
  corpus.cutoff_months = cutoff_months;
  for (auto& u : utterances) {
    if (u.speaker_role == SpeakerRole::TargetChild) continue;
    if (!keep_other && u.speaker_role == SpeakerRole::Other) continue;
    if (u.child_age_months >= cutoff_months) continue;
    corpus.utterances.push_back(std::move(u));
  }
  std::stable_sort(corpus.utterances.begin(), corpus.utterances.end(),
                   [](const Utterance& a, const Utterance& b) {
                     return a.child_age_months < b.child_age_months;
                   });
  return corpus;
}

CorpusStats corpus_stats(const std::vector<std::string>& lines) {
  CorpusStats stats;
  std::unordered_set<std::string> vocab;
  for (const auto& line : lines) {
    ++stats.n_utterances;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && is_space(line[i])) ++i;
      const auto start = i;
      while (i < line.size() && !is_space(line[i])) ++i;
      if (i > start) {
        ++stats.n_tokens;
        vocab.emplace(line.substr(start, i - start));
      }
    }
  }
  stats.vocab_size = static_cast<std::int64_t>(vocab.size());
  stats.mean_sentence_length =
      stats.n_utterances ? static_cast<double>(stats.n_tokens) / static_cast<double>(stats.n_utterances)
                         : 0.0;
  return stats;
}

CorpusStats corpus_stats(const AgeOrderedCorpus& corpus) {
  std::vector<std::string> lines;
  lines.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) lines.push_back(u.text);
  return corpus_stats(lines);
}

void write_corpus_text(std::ostream& out, const AgeOrderedCorpus& corpus) {
  for (const auto& u : corpus.utterances) out << u.text << '\n';
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace curlm::corpus

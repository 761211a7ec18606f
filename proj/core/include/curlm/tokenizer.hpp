#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace curlm {

/// Subword ids with, for every id, the index of the whitespace word it came from.
struct TokenizedSentence {
  std::vector<std::int32_t> token_ids;
  std::vector<std::int32_t> word_index;

  std::size_t size() const { return token_ids.size(); }
  bool empty() const { return token_ids.empty(); }
};

/// Word-internal byte-pair encoding. Words are whitespace tokens; each word is
/// split into UTF-8 code points and the last symbol carries the end-of-word
/// marker `</w>`, so merges never cross word boundaries and decode can restore
/// the spacing.
class Tokenizer {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kMask = 1;
  static constexpr std::int32_t kUnk = 2;
  static constexpr std::int32_t kBos = 3;
  static constexpr std::int32_t kEos = 4;
  static constexpr std::int32_t kNumSpecial = 5;
  static constexpr std::string_view kEndOfWord = "</w>";

  /// Trains on `lines` until the vocabulary holds `vocab_size` entries
  /// (specials + alphabet + merged symbols). Training stops early if no
  /// adjacent pair is left to merge. The most frequent pair wins; ties go to
  /// the lexicographically smallest (left, right) pair.
  static Tokenizer train(std::span<const std::string> lines, int vocab_size);

  static Tokenizer from_json(std::string_view json_text);
  static Tokenizer load(const std::string& path);

  TokenizedSentence encode(std::string_view text) const;

  /// Special ids render as nothing. Throws InvalidArgument on an id outside
  /// the vocabulary.
  std::string decode(std::span<const std::int32_t> ids) const;

  /// Deterministic JSON: {"vocab": [...], "merges": [[l, r], ...]}.
  std::string to_json() const;
  void save(const std::string& path) const;

  /// FNV-1a of to_json(); checkpoints record it to pin the tokenizer.
  std::uint64_t hash() const;

  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  std::int32_t id_of(std::string_view token) const;
  static bool is_special(std::int32_t id) { return id >= 0 && id < kNumSpecial; }

 private:
  Tokenizer(std::vector<std::string> vocab, std::vector<std::pair<std::string, std::string>> merges);
  std::vector<std::string> encode_word(std::string_view word) const;

  std::vector<std::string> vocab_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::map<std::pair<std::string, std::string>, int> merge_rank_;
};

/// Splits a word into UTF-8 code points; the last one gets the `</w>` suffix.
std::vector<std::string> initial_symbols(std::string_view word);

std::vector<std::string_view> split_whitespace(std::string_view text);

std::uint64_t fnv1a64(std::string_view data);

}  // namespace curlm

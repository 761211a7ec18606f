#include "curlm/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "curlm/error.hpp"

namespace curlm {
namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials{"<pad>", "<mask>", "<unk>", "<s>", "</s>"};
  return kSpecials;
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte: its own symbol
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

using SymbolPair = std::pair<int, int>;

struct PairHash {
  std::size_t operator()(const SymbolPair& p) const {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.first) << 32) ^
                                      static_cast<std::uint32_t>(p.second));
  }
};

// Incremental BPE trainer over interned symbols. Pair counts are updated only
// for the words that contain the merged pair; the heap holds possibly stale
// (count, pair) entries that are checked against the live count on pop.
class BpeTrainer {
 public:
  BpeTrainer(std::span<const std::string> lines, std::vector<std::string>& symbols)
      : symbols_(symbols) {
    std::map<std::string, std::int64_t> word_counts;
    for (const auto& line : lines) {
      for (auto w : split_whitespace(line)) ++word_counts[std::string(w)];
    }
    std::set<std::string> alphabet;
    for (const auto& [w, c] : word_counts) {
      for (auto& s : initial_symbols(w)) alphabet.insert(std::move(s));
    }
    for (const auto& s : alphabet) intern(s);
    alphabet_size_ = alphabet.size();

    for (const auto& [w, c] : word_counts) {
      Word word;
      word.count = c;
      for (const auto& s : initial_symbols(w)) word.symbols.push_back(symbol_ids_.at(s));
      words_.push_back(std::move(word));
    }
    for (std::size_t wi = 0; wi < words_.size(); ++wi) add_pairs(wi, +1);
    for (const auto& [pair, count] : pair_counts_) push(pair);
  }

  std::size_t alphabet_size() const { return alphabet_size_; }

  /// Returns false when nothing is left to merge.
  bool merge_next(std::pair<std::string, std::string>& merged) {
    SymbolPair best;
    for (;;) {
      if (heap_.empty()) return false;
      const auto top = heap_.top();
      heap_.pop();
      auto it = pair_counts_.find(top.pair);
      if (it == pair_counts_.end() || it->second != top.count || top.count <= 0) continue;
      best = top.pair;
      break;
    }
    merged = {symbols_[best.first], symbols_[best.second]};
    const int new_id = intern(symbols_[best.first] + symbols_[best.second]);

    const auto affected = where_[best];
    for (std::size_t wi : affected) {
      add_pairs(wi, -1);
      auto& syms = words_[wi].symbols;
      std::vector<int> out;
      out.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          out.push_back(new_id);
          ++i;
        } else {
          out.push_back(syms[i]);
        }
      }
      syms = std::move(out);
      add_pairs(wi, +1);
    }
    for (std::size_t wi : affected) {
      const auto& syms = words_[wi].symbols;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) push({syms[i], syms[i + 1]});
    }
    return true;
  }

  std::size_t interned_count() const { return symbols_.size(); }

 private:
  struct Word {
    std::vector<int> symbols;
    std::int64_t count = 0;
  };
  struct HeapEntry {
    std::int64_t count;
    SymbolPair pair;
  };
  struct HeapOrder {
    const std::vector<std::string>* symbols;
    // Max-heap on count; among equal counts the lexicographically smallest
    // (left, right) string pair must surface first.
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
      if (a.count != b.count) return a.count < b.count;
      const auto& s = *symbols;
      if (s[a.pair.first] != s[b.pair.first]) return s[a.pair.first] > s[b.pair.first];
      return s[a.pair.second] > s[b.pair.second];
    }
  };

  int intern(const std::string& s) {
    auto [it, inserted] = symbol_ids_.emplace(s, static_cast<int>(symbols_.size()));
    if (inserted) symbols_.push_back(s);
    return it->second;
  }

  void add_pairs(std::size_t wi, int sign) {
    const auto& w = words_[wi];
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
      const SymbolPair p{w.symbols[i], w.symbols[i + 1]};
      pair_counts_[p] += sign * w.count;
      if (sign > 0) where_[p].insert(wi);
    }
  }

  void push(const SymbolPair& p) {
    const auto c = pair_counts_[p];
    if (c > 0) heap_.push({c, p});
  }

  std::vector<std::string>& symbols_;
  std::unordered_map<std::string, int> symbol_ids_;
  std::vector<Word> words_;
  std::unordered_map<SymbolPair, std::int64_t, PairHash> pair_counts_;
  std::unordered_map<SymbolPair, std::set<std::size_t>, PairHash> where_;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder> heap_{HeapOrder{&symbols_}};
  std::size_t alphabet_size_ = 0;
};

}  // namespace

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto len = std::min(utf8_length(static_cast<unsigned char>(word[i])), word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  if (!out.empty()) out.back() += Tokenizer::kEndOfWord;
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tokenizer::Tokenizer(std::vector<std::string> vocab,
                     std::vector<std::pair<std::string, std::string>> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!ids_.emplace(vocab_[i], static_cast<std::int32_t>(i)).second) {
      throw InvalidArgument("duplicate vocabulary entry '" + vocab_[i] + "'");
    }
  }
  for (std::size_t r = 0; r < merges_.size(); ++r) merge_rank_.emplace(merges_[r], static_cast<int>(r));
}

Tokenizer Tokenizer::train(std::span<const std::string> lines, int vocab_size) {
  if (lines.empty()) throw InvalidArgument("cannot train a tokenizer on an empty corpus");
  std::vector<std::string> symbols;
  BpeTrainer trainer(lines, symbols);
  const auto base = static_cast<std::size_t>(kNumSpecial) + trainer.alphabet_size();
  if (vocab_size < 0 || static_cast<std::size_t>(vocab_size) < base) {
    throw InvalidArgument("vocab_size " + std::to_string(vocab_size) +
                          " is smaller than specials + alphabet (" + std::to_string(base) + ")");
  }

  std::vector<std::string> vocab = special_tokens();
  vocab.insert(vocab.end(), symbols.begin(), symbols.end());  // alphabet, sorted
  std::set<std::string> seen(vocab.begin(), vocab.end());
  std::vector<std::pair<std::string, std::string>> merges;
  while (vocab.size() < static_cast<std::size_t>(vocab_size)) {
    std::pair<std::string, std::string> merged;
    if (!trainer.merge_next(merged)) break;
    auto joined = merged.first + merged.second;
    merges.push_back(std::move(merged));
    if (seen.insert(joined).second) vocab.push_back(std::move(joined));
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

std::vector<std::string> Tokenizer::encode_word(std::string_view word) const {
  auto syms = initial_symbols(word);
  for (;;) {
    int best_rank = -1;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find({syms[i], syms[i + 1]});
      if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank < 0) break;
    const auto& [left, right] = merges_[static_cast<std::size_t>(best_rank)];
    std::vector<std::string> out;
    out.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i >= best_pos && i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
        out.push_back(left + right);
        ++i;
      } else {
        out.push_back(std::move(syms[i]));
      }
    }
    syms = std::move(out);
  }
  return syms;
}

TokenizedSentence Tokenizer::encode(std::string_view text) const {
  TokenizedSentence out;
  const auto words = split_whitespace(text);
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (const auto& piece : encode_word(words[w])) {
      auto it = ids_.find(piece);
      out.token_ids.push_back(it == ids_.end() ? kUnk : it->second);
      out.word_index.push_back(static_cast<std::int32_t>(w));
    }
  }
  return out;
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto id : ids) {
    if (id < 0 || id >= vocab_size()) {
      throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(vocab_size()));
    }
    if (is_special(id)) continue;
    std::string_view piece = vocab_[static_cast<std::size_t>(id)];
    if (piece.ends_with(kEndOfWord)) {
      out.append(piece.substr(0, piece.size() - kEndOfWord.size()));
      out.push_back(' ');
    } else {
      out.append(piece);
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::int32_t Tokenizer::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

std::string Tokenizer::to_json() const {
  nlohmann::json j;
  j["vocab"] = vocab_;
  auto merges = nlohmann::json::array();
  for (const auto& [l, r] : merges_) merges.push_back({l, r});
  j["merges"] = std::move(merges);
  return j.dump();
}

Tokenizer Tokenizer::from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tokenizer JSON: ") + e.what());
  }
  if (!j.contains("vocab") || !j["vocab"].is_array() || !j.contains("merges") || !j["merges"].is_array()) {
    throw ParseError("tokenizer JSON needs 'vocab' and 'merges' arrays");
  }
  auto vocab = j["vocab"].get<std::vector<std::string>>();
  const auto& specials = special_tokens();
  if (vocab.size() < specials.size() || !std::equal(specials.begin(), specials.end(), vocab.begin())) {
    throw ParseError("tokenizer vocabulary must start with the special tokens");
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& m : j["merges"]) {
    if (!m.is_array() || m.size() != 2) throw ParseError("each merge must be a 2-element array");
    merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tokenizer file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void Tokenizer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write tokenizer file " + path);
  out << to_json() << '\n';
}

std::uint64_t Tokenizer::hash() const { return fnv1a64(to_json()); }

}  // namespace curlm

#include "curlm/tagging.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "curlm/error.hpp"

namespace curlm::tagging {
namespace {

std::set<std::string> all_upos() {
  const auto& u = TagVocabulary::standard().upos_tags();
  return {u.begin(), u.end()};
}

std::set<std::string> unite(std::set<std::string> base, std::initializer_list<const char*> extra) {
  for (const char* t : extra) base.insert(t);
  return base;
}

const std::map<std::string, std::set<std::string>, std::less<>>& unit_table() {
  static const auto table = [] {
    std::map<std::string, std::set<std::string>, std::less<>> t;
    t["NV"] = {"NOUN", "VERB"};
    t["GROWING1"] = unite(t["NV"], {"DET", "ADJ", "PRON", "PROPN", "NUM", "PRT"});
    t["GROWING2"] = unite(t["GROWING1"], {"AUX", "PART", "ADP", "ADV"});
    t["INTJ"] = {"X", "INTJ", "SYM"};
    t["INWARDS_CP"] = unite(t["INTJ"], {"PROPN", "CCONJ", "SCONJ", "SYM"});
    t["INWARDS_TP"] = unite(t["INWARDS_CP"], {"NUM", "PRT", "AUX", "PART", "ADP", "ADV"});
    t["MMM1"] = unite(t["NV"], {"DET", "CONJ", "INTJ"});
    t["MMM2"] = unite(t["MMM1"], {"ADJ", "ADV", "PRON", "PROPN", "NUM", "PRT"});
    t["SEM1"] = unite(all_upos(), {"EVE", "TNS", "ACT", "ANA"});
    t["SEM2"] = unite(t["SEM1"], {"LOG", "COM", "DEM", "DIS", "MOD", "ENT", "NAM", "TIM"});
    t["POS_ALL"] = all_upos();
    return t;
  }();
  return table;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

}  // namespace

TagVocabulary::TagVocabulary(std::vector<std::string> upos, std::vector<std::string> sem)
    : upos_(std::move(upos)), sem_(std::move(sem)) {
  std::sort(upos_.begin(), upos_.end());
  std::sort(sem_.begin(), sem_.end());
}

const TagVocabulary& TagVocabulary::standard() {
  static const TagVocabulary vocab(
      {"NOUN", "VERB", "DET", "ADJ", "PRON", "PROPN", "NUM", "PRT", "AUX", "PART", "ADP", "ADV", "X",
       "INTJ", "SYM", "CCONJ", "SCONJ", "CONJ", "PUNCT"},
      {"EVE", "TNS", "ACT", "ANA", "LOG", "COM", "DEM", "DIS", "MOD", "ENT", "NAM", "TIM"});
  return vocab;
}

std::optional<TagId> TagVocabulary::find(std::string_view tag) const {
  if (auto it = std::lower_bound(upos_.begin(), upos_.end(), tag); it != upos_.end() && *it == tag) {
    return static_cast<TagId>(it - upos_.begin()) + 1;
  }
  if (auto it = std::lower_bound(sem_.begin(), sem_.end(), tag); it != sem_.end() && *it == tag) {
    return static_cast<TagId>(upos_.size() + static_cast<std::size_t>(it - sem_.begin())) + 1;
  }
  return std::nullopt;
}

TagId TagVocabulary::id_of(std::string_view tag) const {
  if (auto id = find(tag)) return *id;
  throw InvalidArgument("unknown tag '" + std::string(tag) + "'");
}

const std::string& TagVocabulary::name_of(TagId id) const {
  if (is_upos(id)) return upos_[static_cast<std::size_t>(id - 1)];
  if (is_sem(id)) return sem_[static_cast<std::size_t>(id - 1) - upos_.size()];
  throw InvalidArgument("tag id " + std::to_string(id) + " is not registered");
}

std::vector<std::string> TagVocabulary::names_by_id() const {
  std::vector<std::string> names{""};
  names.insert(names.end(), upos_.begin(), upos_.end());
  names.insert(names.end(), sem_.begin(), sem_.end());
  return names;
}

const std::vector<std::string>& unit_names() {
  static const std::vector<std::string> names{"NV",   "GROWING1", "GROWING2", "INTJ",
                                              "INWARDS_CP", "INWARDS_TP", "MMM1", "MMM2",
                                              "SEM1", "SEM2",     "POS_ALL"};
  return names;
}

CurriculumUnit resolve_unit(std::string_view name) {
  const auto& table = unit_table();
  auto it = table.find(name);
  if (it == table.end()) {
    std::string valid;
    for (const auto& n : unit_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown curriculum unit '" + std::string(name) + "'; valid: " + valid);
  }
  return {it->first, it->second};
}

std::set<std::string> expand_equivalents(const std::set<std::string>& tags) {
  auto out = tags;
  if (tags.contains("CONJ")) {
    out.insert("CCONJ");
    out.insert("SCONJ");
  }
  if (tags.contains("PRT")) out.insert("PART");
  return out;
}

std::string TaggedSentence::text() const {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w.surface;
  }
  return out;
}

std::vector<TaggedSentence> load_tagged_corpus(std::istream& input) {
  const auto& vocab = TagVocabulary::standard();
  std::vector<TaggedSentence> out;
  TaggedSentence current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (!current.words.empty()) out.push_back(std::move(current));
      current = {};
      continue;
    }
    const auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ParseError("expected 3 tab-separated columns, found " + std::to_string(cols.size()), line_no);
    }
    if (cols[0].empty()) throw ParseError("empty token", line_no);
    const auto upos = vocab.find(cols[1]);
    if (!upos || !vocab.is_upos(*upos)) throw ParseError("unknown UPOS tag '" + cols[1] + "'", line_no);
    TaggedWord word{cols[0], cols[1], std::nullopt};
    if (cols[2] != "_") {
      const auto sem = vocab.find(cols[2]);
      if (!sem || !vocab.is_sem(*sem)) throw ParseError("unknown sem tag '" + cols[2] + "'", line_no);
      word.sem = cols[2];
    }
    current.words.push_back(std::move(word));
  }
  if (!current.words.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<TaggedSentence> load_tagged_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tagged corpus " + path);
  return load_tagged_corpus(in);
}

void write_tagged_corpus(std::ostream& out, const std::vector<TaggedSentence>& sentences) {
  for (const auto& s : sentences) {
    for (const auto& w : s.words) out << w.surface << '\t' << w.upos << '\t' << w.sem.value_or("_") << '\n';
    out << '\n';
  }
}

std::vector<TokenTags> align_tags_to_subwords(const TaggedSentence& sentence,
                                              const TokenizedSentence& tokenized) {
  const auto& vocab = TagVocabulary::standard();
  const auto n_words = static_cast<std::int32_t>(sentence.words.size());
  if (tokenized.word_index.size() != tokenized.token_ids.size()) {
    throw InvalidArgument("tokenized sentence has mismatched word_index length");
  }
  const std::int32_t referenced = tokenized.word_index.empty() ? 0 : tokenized.word_index.back() + 1;
  if (referenced != n_words) {
    throw InvalidArgument("tokenization covers " + std::to_string(referenced) + " words, sentence has " +
                          std::to_string(n_words));
  }
  std::vector<TokenTags> out;
  out.reserve(tokenized.size());
  for (auto w : tokenized.word_index) {
    if (w < 0 || w >= n_words) throw InvalidArgument("word index out of range");
    const auto& word = sentence.words[static_cast<std::size_t>(w)];
    out.push_back({vocab.id_of(word.upos), word.sem ? vocab.id_of(*word.sem) : kNoTag});
  }
  return out;
}

}  // namespace curlm::tagging

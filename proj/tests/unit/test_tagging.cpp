#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "curlm/error.hpp"
#include "curlm/tagging.hpp"
#include "curlm/tokenizer.hpp"
#include "synthetic_grammar.hpp"

using namespace curlm;
using namespace curlm::tagging;

namespace {

using Tags = std::set<std::string>;

const Tags kAllUpos{"ADJ", "ADP",  "ADV",  "AUX",   "CCONJ", "CONJ", "DET", "INTJ", "NOUN", "NUM",
                    "PART", "PRON", "PROPN", "PRT", "PUNCT", "SCONJ", "SYM", "VERB", "X"};

Tags tags_of(const char* name) { return resolve_unit(name).tags; }

bool strict_subset(const Tags& a, const Tags& b) {
  return a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::vector<TaggedSentence> parse(const std::string& text) {
  std::istringstream in(text);
  return load_tagged_corpus(in);
}

}  // namespace

TEST(TagVocabulary, IdsAreContiguousFromOne) {
  const auto& v = TagVocabulary::standard();
  EXPECT_EQ(Tags(v.upos_tags().begin(), v.upos_tags().end()), kAllUpos);
  EXPECT_EQ(v.sem_tags().size(), 12u);
  EXPECT_EQ(v.n_labels(), 32);
  const auto names = v.names_by_id();
  ASSERT_EQ(names.size(), 32u);
  EXPECT_EQ(names[0], "");
  for (TagId id = 1; id < v.n_labels(); ++id) {
    EXPECT_EQ(v.id_of(names[static_cast<std::size_t>(id)]), id);
    EXPECT_EQ(v.name_of(id), names[static_cast<std::size_t>(id)]);
  }
  EXPECT_FALSE(v.find("NOUNN").has_value());
  EXPECT_THROW(v.id_of("NOUNN"), InvalidArgument);
  EXPECT_TRUE(v.is_upos(v.id_of("PUNCT")));
  EXPECT_TRUE(v.is_sem(v.id_of("EVE")));
  EXPECT_FALSE(v.is_upos(0));
  EXPECT_FALSE(v.is_sem(0));
}

TEST(ResolveUnit, MatchesUnitDefinitionsLiterally) {
  EXPECT_EQ(tags_of("NV"), (Tags{"NOUN", "VERB"}));
  EXPECT_EQ(tags_of("GROWING1"), (Tags{"NOUN", "VERB", "DET", "ADJ", "PRON", "PROPN", "NUM", "PRT"}));
  EXPECT_EQ(tags_of("GROWING2"), (Tags{"NOUN", "VERB", "DET", "ADJ", "PRON", "PROPN", "NUM", "PRT", "AUX", "PART",
                                       "ADP", "ADV"}));
  EXPECT_EQ(tags_of("INTJ"), (Tags{"X", "INTJ", "SYM"}));
  EXPECT_EQ(tags_of("INWARDS_CP"), (Tags{"X", "INTJ", "SYM", "PROPN", "CCONJ", "SCONJ"}));
  EXPECT_EQ(tags_of("INWARDS_TP"), (Tags{"X", "INTJ", "SYM", "PROPN", "CCONJ", "SCONJ", "NUM", "PRT", "AUX", "PART",
                                         "ADP", "ADV"}));
  EXPECT_EQ(tags_of("MMM1"), (Tags{"NOUN", "VERB", "DET", "CONJ", "INTJ"}));
  EXPECT_EQ(tags_of("MMM2"), (Tags{"NOUN", "VERB", "DET", "CONJ", "INTJ", "ADJ", "ADV", "PRON", "PROPN", "NUM", "PRT"}));
  Tags sem1 = kAllUpos;
  sem1.insert({"EVE", "TNS", "ACT", "ANA"});
  EXPECT_EQ(tags_of("SEM1"), sem1);
  Tags sem2 = sem1;
  sem2.insert({"LOG", "COM", "DEM", "DIS", "MOD", "ENT", "NAM", "TIM"});
  EXPECT_EQ(tags_of("SEM2"), sem2);
  EXPECT_EQ(tags_of("POS_ALL"), kAllUpos);
}

TEST(ResolveUnit, Sem2MinusSem1) {
  Tags diff;
  const auto s1 = tags_of("SEM1");
  const auto s2 = tags_of("SEM2");
  std::set_difference(s2.begin(), s2.end(), s1.begin(), s1.end(), std::inserter(diff, diff.end()));
  EXPECT_EQ(diff, (Tags{"LOG", "COM", "DEM", "DIS", "MOD", "ENT", "NAM", "TIM"}));
}

TEST(ResolveUnit, StrictNesting) {
  EXPECT_TRUE(strict_subset(tags_of("NV"), tags_of("GROWING1")));
  EXPECT_TRUE(strict_subset(tags_of("GROWING1"), tags_of("GROWING2")));
  EXPECT_TRUE(strict_subset(tags_of("INTJ"), tags_of("INWARDS_CP")));
  EXPECT_TRUE(strict_subset(tags_of("INWARDS_CP"), tags_of("INWARDS_TP")));
  EXPECT_TRUE(strict_subset(tags_of("NV"), tags_of("MMM1")));
  EXPECT_TRUE(strict_subset(tags_of("MMM1"), tags_of("MMM2")));
  EXPECT_TRUE(strict_subset(tags_of("SEM1"), tags_of("SEM2")));
}

TEST(ResolveUnit, NoOrphanTags) {
  ASSERT_EQ(unit_names().size(), 11u);
  for (const auto& name : unit_names()) {
    const auto unit = resolve_unit(name);
    EXPECT_EQ(unit.name, name);
    for (const auto& tag : unit.tags) EXPECT_TRUE(TagVocabulary::standard().find(tag).has_value()) << name << " " << tag;
  }
}

TEST(ResolveUnit, UnknownNameListsValidNames) {
  try {
    resolve_unit("NOUNS");
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    for (const auto& name : unit_names()) EXPECT_NE(msg.find(name), std::string::npos) << name;
  }
}

TEST(ExpandEquivalents, LegacyTags) {
  EXPECT_EQ(expand_equivalents({"CONJ"}), (Tags{"CONJ", "CCONJ", "SCONJ"}));
  EXPECT_EQ(expand_equivalents({"PRT", "NOUN"}), (Tags{"PRT", "PART", "NOUN"}));
  EXPECT_EQ(expand_equivalents({"CCONJ"}), (Tags{"CCONJ"}));
}

TEST(LoadTaggedCorpus, TwoWordBlock) {
  const auto s = parse("the\tDET\t_\ndog\tNOUN\tENT\n");
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(s[0].words.size(), 2u);
  EXPECT_EQ(s[0].words[0], (TaggedWord{"the", "DET", std::nullopt}));
  EXPECT_EQ(s[0].words[1], (TaggedWord{"dog", "NOUN", "ENT"}));
  EXPECT_EQ(s[0].text(), "the dog");
}

TEST(LoadTaggedCorpus, BlocksAndEmpty) {
  EXPECT_TRUE(parse("").empty());
  const auto s = parse("\n\na\tDET\t_\n\n\nb\tNOUN\t_\nc\tVERB\tEVE\n\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].words.size(), 2u);
}

TEST(LoadTaggedCorpus, UnknownTagNamesLine) {
  try {
    parse("the\tDET\t_\ndog\tNOUNN\t_\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("NOUNN"), std::string::npos);
  }
  EXPECT_THROW(parse("dog\tNOUN\tNOUN\n"), ParseError);
}

TEST(LoadTaggedCorpus, WrongColumnCount) {
  try {
    parse("a\tDET\t_\n\nb\tNOUN\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadTaggedCorpus, WriteRoundTrip) {
  const auto sentences = testkit::AgreementGrammar::sentences(50, 1);
  std::ostringstream out;
  write_tagged_corpus(out, sentences);
  const auto again = parse(out.str());
  ASSERT_EQ(again.size(), sentences.size());
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i].words, sentences[i].words);
}

TEST(AlignTags, BroadcastsToSubwords) {
  const auto& v = TagVocabulary::standard();
  // Character-level tokenizer: "dog" becomes three subwords.
  const auto tok = Tokenizer::train(std::vector<std::string>{"dog"}, 8);
  TaggedSentence s{{{"dog", "NOUN", std::nullopt}}};
  const auto tags = align_tags_to_subwords(s, tok.encode("dog"));
  ASSERT_EQ(tags.size(), 3u);
  for (const auto& t : tags) EXPECT_EQ(t, (TokenTags{v.id_of("NOUN"), kNoTag}));
}

TEST(AlignTags, MixedSentenceMatchesHandAlignment) {
  const auto& v = TagVocabulary::standard();
  // Same toy tokenizer as the tokenizer tests: "the" is one token, "dog" is "do" + "g</w>".
  const auto tok = Tokenizer::train(std::vector<std::string>{"the the the dog"}, 14);
  TaggedSentence s{{{"the", "DET", std::nullopt}, {"dog", "NOUN", "ENT"}}};
  const auto tags = align_tags_to_subwords(s, tok.encode("the dog"));
  const std::vector<TokenTags> expected{{v.id_of("DET"), 0},
                                        {v.id_of("NOUN"), v.id_of("ENT")},
                                        {v.id_of("NOUN"), v.id_of("ENT")}};
  EXPECT_EQ(tags, expected);
}

TEST(AlignTags, WordCountMismatch) {
  const auto tok = Tokenizer::train(std::vector<std::string>{"a b c"}, 12);
  TaggedSentence s{{{"a", "DET", std::nullopt}, {"b", "NOUN", std::nullopt}}};
  EXPECT_THROW(align_tags_to_subwords(s, tok.encode("a")), InvalidArgument);
  EXPECT_THROW(align_tags_to_subwords(s, tok.encode("a b c")), InvalidArgument);
}

TEST(AlignTagsProperty, AgreesWithBruteForce) {
  const auto sentences = testkit::AgreementGrammar::sentences(300, 5);
  std::vector<std::string> lines;
  for (const auto& s : sentences) lines.push_back(s.text());
  const auto tok = Tokenizer::train(lines, 70);
  const auto& v = TagVocabulary::standard();
  for (const auto& s : sentences) {
    const auto enc = tok.encode(s.text());
    const auto tags = align_tags_to_subwords(s, enc);
    ASSERT_EQ(tags.size(), enc.size());
    // Brute force: re-encode each word alone and repeat its tags.
    std::vector<TokenTags> expected;
    for (const auto& w : s.words) {
      const TokenTags t{v.id_of(w.upos), w.sem ? v.id_of(*w.sem) : kNoTag};
      expected.insert(expected.end(), tok.encode(w.surface).size(), t);
    }
    ASSERT_EQ(tags, expected);
  }
}

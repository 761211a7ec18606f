#include <gtest/gtest.h>

#include "curlm/corpus.hpp"
#include "curlm/error.hpp"
#include "curlm/rng.hpp"
#include "curlm/tokenizer.hpp"
#include "synthetic_grammar.hpp"

using namespace curlm;

namespace {

std::vector<std::string> grammar_lines(std::size_t n, std::uint64_t seed) {
  std::vector<std::string> lines;
  for (const auto& s : testkit::AgreementGrammar::sentences(n, seed)) lines.push_back(s.text());
  return lines;
}

}  // namespace

TEST(TrainBpe, FirstMergeIsMostFrequentPair) {
  const std::vector<std::string> corpus{"aaab aaab aaab"};
  // alphabet {a, b</w>} + 5 specials = 7; one merge of budget.
  const auto tok = Tokenizer::train(corpus, 8);
  ASSERT_EQ(tok.merges().size(), 1u);
  EXPECT_EQ(tok.merges()[0], (std::pair<std::string, std::string>{"a", "a"}));
  EXPECT_EQ(tok.vocab_size(), 8);
}

TEST(TrainBpe, NoMergeBudgetGivesCharacterTokenizer) {
  const std::vector<std::string> corpus{"abc cab"};
  // alphabet: a, b, c, b</w>, c</w>
  const auto tok = Tokenizer::train(corpus, 10);
  EXPECT_TRUE(tok.merges().empty());
  EXPECT_EQ(tok.vocab_size(), 10);
  EXPECT_EQ(tok.encode("cab").size(), 3u);
}

TEST(TrainBpe, VocabTooSmallIsAnError) {
  const std::vector<std::string> corpus{"abc"};
  EXPECT_THROW(Tokenizer::train(corpus, 7), InvalidArgument);
  EXPECT_THROW(Tokenizer::train(std::vector<std::string>{}, 100), InvalidArgument);
}

TEST(TrainBpe, SpecialIdsAreFixed) {
  const auto tok = Tokenizer::train(std::vector<std::string>{"hello world"}, 20);
  EXPECT_EQ(tok.vocab()[Tokenizer::kPad], "<pad>");
  EXPECT_EQ(tok.vocab()[Tokenizer::kMask], "<mask>");
  EXPECT_EQ(tok.vocab()[Tokenizer::kUnk], "<unk>");
  EXPECT_EQ(tok.vocab()[Tokenizer::kBos], "<s>");
  EXPECT_EQ(tok.vocab()[Tokenizer::kEos], "</s>");
}

TEST(TrainBpe, DeterministicSerialization) {
  const auto lines = grammar_lines(2000, 3);
  const auto a = Tokenizer::train(lines, 120);
  const auto b = Tokenizer::train(lines, 120);
  EXPECT_EQ(a.merges(), b.merges());
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(TrainBpe, ReachesRequestedSizeOrRunsOutOfPairs) {
  const auto lines = grammar_lines(2000, 4);
  EXPECT_EQ(Tokenizer::train(lines, 150).vocab_size(), 150);
  const auto saturated = Tokenizer::train(lines, 5000);
  EXPECT_LT(saturated.vocab_size(), 5000);
  for (const auto& w : testkit::AgreementGrammar::lexicon()) {
    EXPECT_EQ(saturated.encode(w).size(), 1u) << w;
  }
}

TEST(Encode, EmptyString) {
  const auto tok = Tokenizer::train(std::vector<std::string>{"a b"}, 9);
  const auto t = tok.encode("");
  EXPECT_TRUE(t.token_ids.empty());
  EXPECT_TRUE(t.word_index.empty());
  EXPECT_EQ(tok.encode("   \t ").size(), 0u);
}

TEST(Encode, WordIndexFollowsSplits) {
  // Pair counts: (h,e</w>)=3 and (t,h)=3 tie -> "h","e</w>" first; then
  // (t,he</w>)=3; then (d,o)=1 vs (o,g</w>)=1 tie -> "d","o".
  const auto tok = Tokenizer::train(std::vector<std::string>{"the the the dog"}, 14);
  const auto t = tok.encode("the dog");
  ASSERT_EQ(t.token_ids.size(), 3u);
  EXPECT_EQ(t.word_index, (std::vector<std::int32_t>{0, 1, 1}));
  EXPECT_EQ(tok.vocab()[t.token_ids[0]], "the</w>");
  EXPECT_EQ(tok.vocab()[t.token_ids[1]], "do");
  EXPECT_EQ(tok.vocab()[t.token_ids[2]], "g</w>");
}

TEST(Encode, UnknownSymbolsMapToUnk) {
  const auto tok = Tokenizer::train(std::vector<std::string>{"ab ab"}, 12);
  const auto t = tok.encode("az");
  ASSERT_FALSE(t.empty());
  EXPECT_EQ(t.token_ids.back(), Tokenizer::kUnk);
}

TEST(Encode, HandlesMultibyteCharacters) {
  const std::vector<std::string> corpus{"ça va très bien", "très très"};
  const auto tok = Tokenizer::train(corpus, 40);
  for (const auto& line : corpus) EXPECT_EQ(tok.decode(tok.encode(line).token_ids), line);
}

TEST(Decode, EmptyAndSpecials) {
  const auto tok = Tokenizer::train(std::vector<std::string>{"ab ab"}, 12);
  EXPECT_EQ(tok.decode(std::vector<std::int32_t>{}), "");
  auto ids = tok.encode("ab ab").token_ids;
  ids.insert(ids.begin(), Tokenizer::kPad);
  ids.push_back(Tokenizer::kPad);
  ids.push_back(Tokenizer::kEos);
  EXPECT_EQ(tok.decode(ids), "ab ab");
}

TEST(Decode, OutOfRangeIdIsAnError) {
  const auto tok = Tokenizer::train(std::vector<std::string>{"ab"}, 10);
  EXPECT_THROW(tok.decode(std::vector<std::int32_t>{tok.vocab_size()}), InvalidArgument);
  EXPECT_THROW(tok.decode(std::vector<std::int32_t>{-1}), InvalidArgument);
}

TEST(TokenizerProperty, RoundTripAndCoverageOnCorpusLines) {
  const auto lines = grammar_lines(3000, 9);
  for (int vocab : {60, 120, 400}) {
    const auto tok = Tokenizer::train(lines, vocab);
    Rng rng(static_cast<std::uint64_t>(vocab));
    for (int i = 0; i < 100; ++i) {
      const auto& line = lines[rng.below(lines.size())];
      const auto enc = tok.encode(line);
      for (auto id : enc.token_ids) ASSERT_NE(id, Tokenizer::kUnk);
      for (std::size_t k = 1; k < enc.word_index.size(); ++k) ASSERT_LE(enc.word_index[k - 1], enc.word_index[k]);
      ASSERT_EQ(enc.word_index.back() + 1, static_cast<int>(split_whitespace(line).size()));
      ASSERT_EQ(tok.decode(enc.token_ids), corpus::normalize_whitespace(line));
    }
  }
}

TEST(TokenizerJson, ReloadsIdentically) {
  const auto tok = Tokenizer::train(grammar_lines(500, 2), 100);
  const auto again = Tokenizer::from_json(tok.to_json());
  EXPECT_EQ(again.vocab(), tok.vocab());
  EXPECT_EQ(again.merges(), tok.merges());
  EXPECT_EQ(again.encode("the dogs run .").token_ids, tok.encode("the dogs run .").token_ids);
  EXPECT_THROW(Tokenizer::from_json(R"({"vocab":["x"],"merges":[]})"), ParseError);
  EXPECT_THROW(Tokenizer::from_json("[]"), ParseError);
}

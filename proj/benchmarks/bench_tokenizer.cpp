#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "curlm/rng.hpp"
#include "curlm/tokenizer.hpp"

using namespace curlm;

namespace {

std::vector<std::string> random_lines(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words{"the",   "doggy", "is",     "running", "look",  "at",    "that",
                                              "ball",  "where", "did",    "it",      "go",    "mommy", "wants",
                                              "some",  "juice", "sleepy", "baby",    "yes",   "nice"};
  Rng rng(seed);
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) {
    std::string line;
    const auto len = 2 + rng.below(8);
    for (std::size_t w = 0; w < len; ++w) {
      if (w) line += ' ';
      line += words[rng.below(words.size())];
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

void BM_TokenizerTrain(benchmark::State& state) {
  const auto lines = random_lines(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Tokenizer::train(lines, 200).vocab_size());
  }
}
BENCHMARK(BM_TokenizerTrain)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_TokenizerEncode(benchmark::State& state) {
  const auto lines = random_lines(2000, 2);
  const auto tok = Tokenizer::train(lines, 120);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tok.encode(lines[i++ % lines.size()]).token_ids.data());
  }
}
BENCHMARK(BM_TokenizerEncode);

}  // namespace

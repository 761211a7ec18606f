#pragma once

// Minimal-pair evaluation: pseudo-log-likelihood scoring with a masked LM,
// SLOR normalisation against a unigram model, per-phenomenon accuracy.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curlm/model.hpp"
#include "curlm/tokenizer.hpp"

namespace curlm::eval {

struct MinimalPair {
  std::string phenomenon;
  std::string good;
  std::string bad;
};

/// JSONL with `phenomenon`, `sentence_good`, `sentence_bad` (`good` / `bad`
/// accepted as aliases). Throws ParseError with the line number.
std::vector<MinimalPair> load_minimal_pairs(std::istream& in);
std::vector<MinimalPair> load_minimal_pairs_file(const std::string& path);

/// Add-k smoothed subword unigram distribution over the whole vocabulary.
class UnigramModel {
 public:
  /// Counts non-special subwords of every line.
  static UnigramModel from_corpus(const Tokenizer& tokenizer, std::span<const std::string> lines, double k = 1.0);
  static UnigramModel from_counts(std::vector<std::int64_t> counts, double k = 1.0);

  /// log((count(id) + k) / (total + k * V)).
  double log_prob(std::int32_t id) const;
  double k() const { return k_; }
  std::int64_t total() const { return total_; }
  std::size_t vocab_size() const { return counts_.size(); }

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
  double k_ = 1.0;
};

/// Sum over every non-special position i of log P(ids[i] | ids with position
/// i replaced by MASK). Special ids are kept as context and not scored. All
/// masked copies run as one batch. Throws InvalidArgument if nothing is scored.
template <typename Real>
double pll_score_ids(const model::ModelParams<Real>& params, std::span<const std::int32_t> ids);

/// Tokenizes the sentence, appends EOS (as in training) and returns
/// pll_score_ids over its subwords. No length normalisation.
template <typename Real>
double pll_score(const model::ModelParams<Real>& params, const Tokenizer& tokenizer, std::string_view sentence);

/// (logp_m - logp_u_sum) / n_tokens.
double slor(double logp_m, double logp_u_sum, std::size_t n_tokens);

/// SLOR with the unigram log-probability summed over `tokens`, |X| = tokens.size().
double slor(double logp_m, std::span<const std::int32_t> tokens, const UnigramModel& unigram);

enum class ScoringMethod { LogProb, Slor };
ScoringMethod parse_scoring_method(std::string_view text);
std::string_view to_string(ScoringMethod method);

struct PairResult {
  MinimalPair pair;
  double score_good = 0.0;
  double score_bad = 0.0;
  bool correct = false;  // strictly score_good > score_bad
};

PairResult make_pair_result(MinimalPair pair, double score_good, double score_bad);

/// `unigram` must be non-null exactly when method == Slor. Scoring failures
/// are rethrown naming the pair index.
template <typename Real>
std::vector<PairResult> score_pairs(const model::ModelParams<Real>& params, const Tokenizer& tokenizer,
                                    std::span<const MinimalPair> pairs, ScoringMethod method,
                                    const UnigramModel* unigram = nullptr);

struct PhenomenonAccuracy {
  int n = 0;
  int correct = 0;
  double accuracy = 0.0;
};

struct AccuracyTable {
  std::map<std::string, PhenomenonAccuracy> phenomena;
  double overall = 0.0;  // unweighted mean over phenomena
};

/// Throws InvalidArgument on empty input.
AccuracyTable accuracy_by_phenomenon(std::span<const PairResult> results);

void write_results_csv(std::ostream& out, std::span<const PairResult> results);
std::string summary_json(const AccuracyTable& table, ScoringMethod method);

/// Reads a summary written by summary_json.
AccuracyTable load_summary_file(const std::string& path);

}  // namespace curlm::eval

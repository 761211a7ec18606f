#include "curlm/eval.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "curlm/error.hpp"

namespace curlm::eval {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::string string_field(const nlohmann::json& obj, std::initializer_list<const char*> keys, std::size_t line) {
  for (const char* k : keys) {
    if (obj.contains(k)) {
      if (!obj[k].is_string()) throw ParseError(std::string("field '") + k + "' must be a string", line);
      return obj[k].get<std::string>();
    }
  }
  throw ParseError(std::string("missing field '") + *keys.begin() + "'", line);
}

}  // namespace

std::vector<MinimalPair> load_minimal_pairs(std::istream& in) {
  std::vector<MinimalPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line_no);
    MinimalPair p;
    p.phenomenon = string_field(obj, {"phenomenon"}, line_no);
    p.good = string_field(obj, {"sentence_good", "good"}, line_no);
    p.bad = string_field(obj, {"sentence_bad", "bad"}, line_no);
    if (p.phenomenon.empty()) throw ParseError("empty phenomenon", line_no);
    if (p.good == p.bad) throw ParseError("good and bad sentences are identical", line_no);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<MinimalPair> load_minimal_pairs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open minimal pairs file " + path);
  return load_minimal_pairs(in);
}

UnigramModel UnigramModel::from_corpus(const Tokenizer& tokenizer, std::span<const std::string> lines, double k) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(tokenizer.vocab_size()), 0);
  for (const auto& line : lines) {
    for (auto id : tokenizer.encode(line).token_ids) {
      if (!Tokenizer::is_special(id)) ++counts[static_cast<std::size_t>(id)];
    }
  }
  return from_counts(std::move(counts), k);
}

UnigramModel UnigramModel::from_counts(std::vector<std::int64_t> counts, double k) {
  if (!(k > 0.0)) throw InvalidArgument("unigram smoothing constant must be positive");
  if (counts.empty()) throw InvalidArgument("unigram model needs a non-empty vocabulary");
  UnigramModel m;
  m.k_ = k;
  for (auto c : counts) {
    if (c < 0) throw InvalidArgument("negative unigram count");
    m.total_ += c;
  }
  m.counts_ = std::move(counts);
  return m;
}

double UnigramModel::log_prob(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= counts_.size()) {
    throw InvalidArgument("unigram lookup outside vocabulary");
  }
  const double v = static_cast<double>(counts_.size());
  return std::log((static_cast<double>(counts_[static_cast<std::size_t>(id)]) + k_) /
                  (static_cast<double>(total_) + k_ * v));
}

template <typename Real>
double pll_score_ids(const model::ModelParams<Real>& params, std::span<const std::int32_t> ids) {
  std::vector<int> scored;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!Tokenizer::is_special(ids[i])) scored.push_back(static_cast<int>(i));
  }
  if (scored.empty()) throw InvalidArgument("sentence has no scorable tokens");
  const int S = static_cast<int>(ids.size());
  model::TokenBatch batch;
  batch.batch = static_cast<int>(scored.size());
  batch.seq = S;
  batch.ids.reserve(static_cast<std::size_t>(batch.rows()));
  for (int pos : scored) {
    for (int j = 0; j < S; ++j) {
      batch.ids.push_back(j == pos ? Tokenizer::kMask : ids[static_cast<std::size_t>(j)]);
    }
  }
  batch.valid.assign(batch.ids.size(), 1);
  const auto cache = model::forward(params, batch);
  double total = 0.0;
  for (std::size_t b = 0; b < scored.size(); ++b) {
    const auto row = static_cast<Eigen::Index>(b) * S + scored[b];
    const auto logits = cache.vocab_logits.row(row).template cast<double>().eval();
    const double max_logit = logits.maxCoeff();
    const double log_z = max_logit + std::log((logits.array() - max_logit).exp().sum());
    total += logits(ids[static_cast<std::size_t>(scored[b])]) - log_z;
  }
  return total;
}

template <typename Real>
double pll_score(const model::ModelParams<Real>& params, const Tokenizer& tokenizer, std::string_view sentence) {
  auto ids = tokenizer.encode(sentence).token_ids;
  if (ids.empty()) throw InvalidArgument("sentence '" + std::string(sentence) + "' tokenizes to nothing");
  ids.push_back(Tokenizer::kEos);
  return pll_score_ids(params, ids);
}

double slor(double logp_m, double logp_u_sum, std::size_t n_tokens) {
  if (n_tokens == 0) throw InvalidArgument("SLOR needs at least one token");
  return (logp_m - logp_u_sum) / static_cast<double>(n_tokens);
}

double slor(double logp_m, std::span<const std::int32_t> tokens, const UnigramModel& unigram) {
  double logp_u = 0.0;
  for (auto id : tokens) logp_u += unigram.log_prob(id);
  return slor(logp_m, logp_u, tokens.size());
}

ScoringMethod parse_scoring_method(std::string_view text) {
  std::string key;
  for (char c : text) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "logprob" || key == "log-prob" || key == "pll") return ScoringMethod::LogProb;
  if (key == "slor") return ScoringMethod::Slor;
  throw InvalidArgument("unknown scoring method '" + std::string(text) + "'; valid: logprob, slor");
}

std::string_view to_string(ScoringMethod method) {
  return method == ScoringMethod::Slor ? "slor" : "logprob";
}

PairResult make_pair_result(MinimalPair pair, double score_good, double score_bad) {
  return {std::move(pair), score_good, score_bad, score_good > score_bad};
}

template <typename Real>
std::vector<PairResult> score_pairs(const model::ModelParams<Real>& params, const Tokenizer& tokenizer,
                                    std::span<const MinimalPair> pairs, ScoringMethod method,
                                    const UnigramModel* unigram) {
  if ((method == ScoringMethod::Slor) != (unigram != nullptr)) {
    throw InvalidArgument("a unigram model is required for SLOR and only for SLOR");
  }
  auto score = [&](const std::string& sentence) {
    const double logp = pll_score(params, tokenizer, sentence);
    if (method == ScoringMethod::LogProb) return logp;
    std::vector<std::int32_t> tokens;
    for (auto id : tokenizer.encode(sentence).token_ids) {
      if (!Tokenizer::is_special(id)) tokens.push_back(id);
    }
    return slor(logp, tokens, *unigram);
  };
  std::vector<PairResult> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      const double good = score(pairs[i].good);
      const double bad = score(pairs[i].bad);
      out.push_back(make_pair_result(pairs[i], good, bad));
    } catch (const Error& e) {
      throw Error(e.code(), "pair " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

AccuracyTable accuracy_by_phenomenon(std::span<const PairResult> results) {
  if (results.empty()) throw InvalidArgument("no results to aggregate");
  AccuracyTable table;
  for (const auto& r : results) {
    auto& entry = table.phenomena[r.pair.phenomenon];
    ++entry.n;
    if (r.correct) ++entry.correct;
  }
  double sum = 0.0;
  for (auto& [name, entry] : table.phenomena) {
    entry.accuracy = static_cast<double>(entry.correct) / entry.n;
    sum += entry.accuracy;
  }
  table.overall = sum / static_cast<double>(table.phenomena.size());
  return table;
}

void write_results_csv(std::ostream& out, std::span<const PairResult> results) {
  out << "phenomenon,sentence_good,sentence_bad,score_good,score_bad,correct\n";
  for (const auto& r : results) {
    out << csv_field(r.pair.phenomenon) << ',' << csv_field(r.pair.good) << ',' << csv_field(r.pair.bad) << ','
        << fmt::format("{},{},{}", r.score_good, r.score_bad, r.correct ? 1 : 0) << '\n';
  }
}

std::string summary_json(const AccuracyTable& table, ScoringMethod method) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(method));
  auto phenomena = nlohmann::ordered_json::object();
  for (const auto& [name, e] : table.phenomena) {
    phenomena[name] = {{"n", e.n}, {"correct", e.correct}, {"accuracy", e.accuracy}};
  }
  j["phenomena"] = std::move(phenomena);
  j["overall"] = table.overall;
  return j.dump(2);
}

AccuracyTable load_summary_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open summary " + path);
  AccuracyTable table;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [name, e] : j.at("phenomena").items()) {
      PhenomenonAccuracy acc;
      acc.n = e.value("n", 0);
      acc.correct = e.value("correct", 0);
      acc.accuracy = e.at("accuracy").get<double>();
      table.phenomena[name] = acc;
    }
    table.overall = j.value("overall", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return table;
}

template double pll_score_ids<float>(const model::ModelParams<float>&, std::span<const std::int32_t>);
template double pll_score_ids<double>(const model::ModelParams<double>&, std::span<const std::int32_t>);
template double pll_score<float>(const model::ModelParams<float>&, const Tokenizer&, std::string_view);
template double pll_score<double>(const model::ModelParams<double>&, const Tokenizer&, std::string_view);
template std::vector<PairResult> score_pairs<float>(const model::ModelParams<float>&, const Tokenizer&,
                                                    std::span<const MinimalPair>, ScoringMethod,
                                                    const UnigramModel*);
template std::vector<PairResult> score_pairs<double>(const model::ModelParams<double>&, const Tokenizer&,
                                                     std::span<const MinimalPair>, ScoringMethod,
                                                     const UnigramModel*);

}  // namespace curlm::eval

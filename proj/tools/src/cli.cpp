#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "curlm/checkpoint.hpp"
#include "curlm/corpus.hpp"
#include "curlm/error.hpp"
#include "curlm/eval.hpp"
#include "curlm/stats.hpp"
#include "curlm/tagging.hpp"
#include "curlm/tokenizer.hpp"
#include "curlm/trainer.hpp"

namespace curlm::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kOutputDirEnv = "CURLM_OUTPUT_DIR";

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_manifest(const fs::path& path, const std::string& command, const std::vector<std::string>& args,
                    json config, std::optional<std::uint64_t> seed) {
  json m;
  m["command"] = command;
  m["args"] = args;
  m["config"] = std::move(config);
  if (seed) m["seed"] = *seed;
  m["version"] = CURLM_VERSION;
  m["created"] = utc_timestamp();
  write_text(path, m.dump(2) + "\n");
}

/// `--out-dir` if given, else $CURLM_OUTPUT_DIR, else `fallback`.
std::string resolve_output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return fallback;
}

/// A file argument relative to the output directory from the environment,
/// when that variable is set and the path is relative.
fs::path under_output_dir(const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return fs::path(env) / p;
  return p;
}

bool looks_tagged(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    return line.find('\t') != std::string::npos;
  }
  return false;
}

/// Sentences of a plain one-per-line text file or of a tagged TSV corpus.
std::vector<std::string> read_sentences(const std::string& path) {
  if (looks_tagged(path)) {
    std::vector<std::string> lines;
    for (const auto& s : tagging::load_tagged_corpus_file(path)) lines.push_back(s.text());
    return lines;
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  for (auto& line : corpus::read_lines(in)) {
    auto norm = corpus::normalize_whitespace(line);
    if (!norm.empty()) lines.push_back(std::move(norm));
  }
  return lines;
}

corpus::TranscriptFormat detect_format(const std::string& path, const std::string& requested) {
  if (requested == "jsonl") return corpus::TranscriptFormat::Jsonl;
  if (requested == "chat") return corpus::TranscriptFormat::ChatLite;
  const auto ext = fs::path(path).extension().string();
  if (ext == ".jsonl" || ext == ".json") return corpus::TranscriptFormat::Jsonl;
  if (ext == ".cha" || ext == ".chat") return corpus::TranscriptFormat::ChatLite;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos) continue;
    return line[pos] == '{' ? corpus::TranscriptFormat::Jsonl : corpus::TranscriptFormat::ChatLite;
  }
  return corpus::TranscriptFormat::Jsonl;
}

json stats_json(const corpus::CorpusStats& s) {
  json j;
  j["n_utterances"] = s.n_utterances;
  j["n_tokens"] = s.n_tokens;
  j["vocab_size"] = s.vocab_size;
  j["mean_sentence_length"] = s.mean_sentence_length;
  return j;
}

struct PrepareArgs {
  std::vector<std::string> inputs;
  std::string format = "auto";
  std::string out;
  std::string stats_out;
  int cutoff_months = 72;
  bool drop_other = false;
};

int cmd_prepare(const PrepareArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  std::vector<corpus::Utterance> all;
  for (const auto& path : a.inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
      auto u = corpus::parse_transcripts(in, detect_format(path, a.format), fs::path(path).filename().string());
      all.insert(all.end(), std::make_move_iterator(u.begin()), std::make_move_iterator(u.end()));
    } catch (const ParseError& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  const auto c = corpus::build_age_ordered_corpus(std::move(all), a.cutoff_months, !a.drop_other);
  const auto corpus_path = under_output_dir(a.out);
  std::ostringstream text;
  corpus::write_corpus_text(text, c);
  write_text(corpus_path, text.str());

  const auto stats = corpus::corpus_stats(c);
  const fs::path stats_path = a.stats_out.empty() ? fs::path(corpus_path.string() + ".stats.json")
                                                  : under_output_dir(a.stats_out);
  write_text(stats_path, stats_json(stats).dump(2) + "\n");

  json cfg;
  cfg["inputs"] = a.inputs;
  cfg["format"] = a.format;
  cfg["cutoff_months"] = a.cutoff_months;
  cfg["drop_other"] = a.drop_other;
  write_manifest(corpus_path.string() + ".manifest.json", "prepare-corpus", args, cfg, std::nullopt);
  out << fmt::format("wrote {} utterances ({} tokens) to {}\n", stats.n_utterances, stats.n_tokens,
                     corpus_path.string());
  return 0;
}

struct TokenizerArgs {
  std::string input;
  std::string out;
  int vocab_size = 8192;
};

int cmd_train_tokenizer(const TokenizerArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto lines = read_sentences(a.input);
  const auto tok = Tokenizer::train(lines, a.vocab_size);
  const auto path = under_output_dir(a.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  tok.save(path.string());
  json cfg;
  cfg["input"] = a.input;
  cfg["vocab_size"] = a.vocab_size;
  cfg["actual_vocab_size"] = tok.vocab_size();
  cfg["hash"] = format_hash(tok.hash());
  write_manifest(path.string() + ".manifest.json", "train-tokenizer", args, cfg, std::nullopt);
  out << fmt::format("trained tokenizer with {} entries ({} merges), hash {}\n", tok.vocab_size(),
                     tok.merges().size(), format_hash(tok.hash()));
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string curriculum;
  std::string corpus;
  std::string tokenizer;
  std::string out_dir;
  std::string resume;
  std::vector<std::string> overrides;
  std::optional<std::int64_t> steps, warmup, checkpoint_every, log_every;
  std::optional<double> lr;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  KeyValues kv;
  if (!a.config.empty()) kv = load_key_values(a.config);
  auto set = [&](const std::string& key, const std::string& value) { kv[key] = value; };
  for (const auto& o : a.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key=value, got '" + o + "'");
    set(corpus::normalize_whitespace(o.substr(0, eq)), corpus::normalize_whitespace(o.substr(eq + 1)));
  }
  if (!a.curriculum.empty()) set("curriculum.name", a.curriculum);
  if (!a.corpus.empty()) set("paths.corpus", a.corpus);
  if (!a.tokenizer.empty()) set("paths.tokenizer", a.tokenizer);
  if (a.steps) set("train.total_steps", std::to_string(*a.steps));
  if (a.warmup) set("train.warmup_steps", std::to_string(*a.warmup));
  if (a.checkpoint_every) set("train.checkpoint_every", std::to_string(*a.checkpoint_every));
  if (a.log_every) set("train.log_every", std::to_string(*a.log_every));
  if (a.lr) set("train.lr", fmt::format("{}", *a.lr));
  if (a.batch_size) set("train.batch_size", std::to_string(*a.batch_size));
  if (a.seed) set("train.seed", std::to_string(*a.seed));

  auto config = trainer::TrainConfig::from_key_values(kv);
  config.output_dir = resolve_output_dir(a.out_dir, config.output_dir.empty() ? "run" : config.output_dir);
  config.validate();
  fs::create_directories(config.output_dir);

  json cfg = json::object();
  for (const auto& [k, v] : config.to_key_values()) cfg[k] = v;
  if (!a.resume.empty()) cfg["resume"] = a.resume;
  write_manifest(fs::path(config.output_dir) / "manifest.json", "train", args, cfg, config.seed);

  const auto result = trainer::train(config, a.resume.empty() ? std::nullopt : std::optional(a.resume));
  if (!result.metrics.empty()) {
    const auto& last = result.metrics.back();
    out << fmt::format("step {} stage {} mlm_loss {:.4f} tag_loss {:.4f}\n", last.step, last.stage, last.mlm_loss,
                       last.tag_loss);
  }
  out << fmt::format("wrote {} checkpoints to {}\n", result.checkpoints.size(), config.output_dir);
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string tokenizer;
  std::string pairs;
  std::string method = "logprob";
  std::string unigram_corpus;
  std::string out_dir;
  double unigram_k = 1.0;
};

int cmd_evaluate(const EvaluateArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto method = eval::parse_scoring_method(a.method);
  if (method == eval::ScoringMethod::Slor && a.unigram_corpus.empty()) {
    throw InvalidArgument("--method slor needs --unigram-corpus");
  }
  const auto ck = load_checkpoint(a.checkpoint);
  const auto tok = Tokenizer::load(a.tokenizer);
  if (tok.hash() != ck.tokenizer_hash) {
    throw InvalidArgument("tokenizer hash " + format_hash(tok.hash()) + " does not match the checkpoint's " +
                          format_hash(ck.tokenizer_hash));
  }
  const auto pairs = eval::load_minimal_pairs_file(a.pairs);
  if (pairs.empty()) throw InvalidArgument("no minimal pairs in " + a.pairs);
  std::optional<eval::UnigramModel> unigram;
  if (method == eval::ScoringMethod::Slor) {
    const auto lines = read_sentences(a.unigram_corpus);
    unigram = eval::UnigramModel::from_corpus(tok, lines, a.unigram_k);
  }
  const auto params = model::cast_params<double>(ck.params);
  const auto results = eval::score_pairs(params, tok, pairs, method, unigram ? &*unigram : nullptr);
  const auto table = eval::accuracy_by_phenomenon(results);

  const fs::path dir = resolve_output_dir(a.out_dir, "eval");
  fs::create_directories(dir);
  std::ostringstream csv;
  eval::write_results_csv(csv, results);
  write_text(dir / "results.csv", csv.str());
  write_text(dir / "summary.json", eval::summary_json(table, method) + "\n");
  json cfg;
  cfg["checkpoint"] = a.checkpoint;
  cfg["checkpoint_step"] = ck.step;
  cfg["tokenizer"] = a.tokenizer;
  cfg["tokenizer_hash"] = format_hash(tok.hash());
  cfg["pairs"] = a.pairs;
  cfg["method"] = std::string(eval::to_string(method));
  if (unigram) {
    cfg["unigram_corpus"] = a.unigram_corpus;
    cfg["unigram_k"] = a.unigram_k;
  }
  write_manifest(dir / "manifest.json", "evaluate", args, cfg, std::nullopt);

  for (const auto& [name, e] : table.phenomena) {
    out << fmt::format("{}\t{}/{}\t{:.4f}\n", name, e.correct, e.n, e.accuracy);
  }
  out << fmt::format("overall\t{:.4f}\n", table.overall);
  return 0;
}

struct SignificanceArgs {
  std::string a;
  std::string b;
  bool json_output = false;
};

int cmd_significance(const SignificanceArgs& s, std::ostream& out) {
  const auto ta = eval::load_summary_file(s.a);
  const auto tb = eval::load_summary_file(s.b);
  std::vector<double> acc_a, acc_b;
  for (const auto& [name, e] : ta.phenomena) {
    const auto it = tb.phenomena.find(name);
    if (it == tb.phenomena.end()) throw InvalidArgument("phenomenon '" + name + "' missing from " + s.b);
    acc_a.push_back(e.accuracy);
    acc_b.push_back(it->second.accuracy);
  }
  if (tb.phenomena.size() != ta.phenomena.size()) {
    throw InvalidArgument(s.b + " has phenomena that " + s.a + " lacks");
  }
  const auto r = stats::paired_t_test(acc_a, acc_b);
  if (s.json_output) {
    json j;
    j["n"] = r.n;
    j["df"] = r.df;
    j["mean_diff"] = r.mean_diff;
    j["sd_diff"] = r.sd_diff;
    j["t"] = std::isfinite(r.t) ? json(r.t) : json(r.t > 0 ? "inf" : "-inf");
    j["p"] = r.p;
    j["degenerate"] = r.degenerate;
    out << j.dump(2) << "\n";
  } else {
    out << fmt::format("t={} df={} p={}{}\n", r.t, r.df, r.p, r.degenerate ? " (degenerate)" : "");
  }
  return 0;
}

int cmd_stats(const std::string& input, std::ostream& out) {
  const auto lines = read_sentences(input);
  out << stats_json(corpus::corpus_stats(lines)).dump(2) << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Curriculum masked language model training and evaluation", "curlm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CURLM_VERSION);

  PrepareArgs prepare;
  auto* prep = app.add_subcommand("prepare-corpus", "Filter and age-order transcripts into a text corpus");
  prep->add_option("--in", prepare.inputs, "Transcript files (JSONL or CHAT-lite)")->required()->check(CLI::ExistingFile);
  prep->add_option("--format", prepare.format, "Input format")->check(CLI::IsMember({"auto", "jsonl", "chat"}));
  prep->add_option("--out", prepare.out, "Output corpus text file")->required();
  prep->add_option("--stats-out", prepare.stats_out, "Stats JSON path (default: <out>.stats.json)");
  prep->add_option("--cutoff-months", prepare.cutoff_months, "Keep utterances with child age below this")
      ->check(CLI::PositiveNumber);
  prep->add_flag("--drop-other", prepare.drop_other, "Also drop sibling/peer speakers");

  TokenizerArgs tokenizer;
  auto* tok = app.add_subcommand("train-tokenizer", "Train the BPE tokenizer");
  tok->add_option("--in", tokenizer.input, "Corpus: text (one sentence per line) or tagged TSV")
      ->required()
      ->check(CLI::ExistingFile);
  tok->add_option("--out", tokenizer.out, "Tokenizer JSON path")->required();
  tok->add_option("--vocab-size", tokenizer.vocab_size, "Target vocabulary size")->check(CLI::PositiveNumber);

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train a model under a curriculum");
  tr->add_option("--config", train.config, "Key-value config file")->check(CLI::ExistingFile);
  tr->add_option("--curriculum", train.curriculum, "none, growing, inwards, mmm_upos, mmm_sem");
  tr->add_option("--corpus", train.corpus, "Tagged TSV corpus");
  tr->add_option("--tokenizer", train.tokenizer, "Tokenizer JSON");
  tr->add_option("--out-dir", train.out_dir,
                 "Output directory (default: $CURLM_OUTPUT_DIR, then paths.output_dir, then ./run)");
  tr->add_option("--resume", train.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  tr->add_option("--set", train.overrides, "Config override key=value (repeatable)");
  tr->add_option("--steps", train.steps, "Total training steps");
  tr->add_option("--warmup", train.warmup, "Warmup steps");
  tr->add_option("--lr", train.lr, "Peak learning rate");
  tr->add_option("--batch-size", train.batch_size, "Sequences per batch");
  tr->add_option("--checkpoint-every", train.checkpoint_every, "Periodic checkpoint interval (0 = off)");
  tr->add_option("--log-every", train.log_every, "Metrics interval");
  tr->add_option("--seed", train.seed, "Global seed");

  EvaluateArgs evaluate;
  auto* ev = app.add_subcommand("evaluate", "Score minimal pairs with a checkpoint");
  ev->add_option("--checkpoint", evaluate.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--tokenizer", evaluate.tokenizer, "Tokenizer JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--pairs", evaluate.pairs, "Minimal pairs JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--method", evaluate.method, "logprob or slor")->check(CLI::IsMember({"logprob", "slor"}));
  ev->add_option("--unigram-corpus", evaluate.unigram_corpus, "Corpus for the SLOR unigram model")
      ->check(CLI::ExistingFile);
  ev->add_option("--unigram-k", evaluate.unigram_k, "Add-k smoothing constant")->check(CLI::PositiveNumber);
  ev->add_option("--out-dir", evaluate.out_dir, "Output directory (default: $CURLM_OUTPUT_DIR or ./eval)");

  SignificanceArgs significance;
  auto* sig = app.add_subcommand("significance", "Paired t-test over per-phenomenon accuracies");
  sig->add_option("--a", significance.a, "summary.json of run A")->required()->check(CLI::ExistingFile);
  sig->add_option("--b", significance.b, "summary.json of run B")->required()->check(CLI::ExistingFile);
  sig->add_flag("--json", significance.json_output, "Print the result as JSON");

  std::string stats_input;
  auto* st = app.add_subcommand("stats", "Corpus statistics");
  st->add_option("--in", stats_input, "Corpus: text or tagged TSV")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::Normal);
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << CURLM_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    err << target->help();
    return 2;
  }

  try {
    if (*prep) return cmd_prepare(prepare, args, out);
    if (*tok) return cmd_train_tokenizer(tokenizer, args, out);
    if (*tr) return cmd_train(train, args, out);
    if (*ev) return cmd_evaluate(evaluate, args, out);
    if (*sig) return cmd_significance(significance, out);
    if (*st) return cmd_stats(stats_input, out);
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace curlm::cli

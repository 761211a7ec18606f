#include "curlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "curlm/error.hpp"
#include "curlm/rng.hpp"

namespace curlm::trainer {

namespace fs = std::filesystem;
using curriculum::CurriculumName;

void TrainConfig::validate() const {
  if (total_steps <= 0) throw InvalidArgument("train.total_steps must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw InvalidArgument("train.warmup_steps must lie in [0, total_steps)");
  }
  if (batch_size < 1) throw InvalidArgument("train.batch_size must be at least 1");
  if (log_every < 1) throw InvalidArgument("train.log_every must be at least 1");
  if (checkpoint_every < 0) throw InvalidArgument("train.checkpoint_every must be non-negative");
  if (!(peak_lr >= 0.0)) throw InvalidArgument("train.lr must be non-negative");
  if (!(lambda_tag >= 0.0)) throw InvalidArgument("train.lambda_tag must be non-negative");
  model.validate();
}

TrainConfig TrainConfig::from_key_values(const KeyValues& values) {
  TrainConfig c;
  if (auto it = values.find("model.preset"); it != values.end()) {
    if (it->second == "full") {
      c.model = model::ModelConfig::full_scale();
    } else if (it->second != "desk") {
      throw InvalidArgument("model.preset must be 'desk' or 'full'");
    }
  }
  for (const auto& [key, value] : values) {
    if (key == "model.preset") continue;
    if (key == "paths.corpus") c.corpus_path = value;
    else if (key == "paths.tokenizer") c.tokenizer_path = value;
    else if (key == "paths.output_dir") c.output_dir = value;
    else if (key == "curriculum.name") c.curriculum = curriculum::parse_curriculum_name(value);
    else if (key == "curriculum.boundaries") {
      auto list = parse_double_list(key, value);
      if (list.empty()) c.boundaries.reset();
      else c.boundaries = std::move(list);
    }
    else if (key == "curriculum.active_ratio") c.masking.active_ratio = parse_double_value(key, value);
    else if (key == "curriculum.base_ratio") c.masking.base_ratio = parse_double_value(key, value);
    else if (key == "model.n_layers") c.model.n_layers = parse_int_value(key, value);
    else if (key == "model.n_heads") c.model.n_heads = parse_int_value(key, value);
    else if (key == "model.hidden") c.model.hidden = parse_int_value(key, value);
    else if (key == "model.ffn_mult") c.model.ffn_mult = parse_int_value(key, value);
    else if (key == "model.max_seq_len") c.model.max_seq_len = parse_int_value(key, value);
    else if (key == "model.layer_norm_eps") c.model.layer_norm_eps = parse_double_value(key, value);
    else if (key == "model.dropout") c.model.dropout = parse_double_value(key, value);
    else if (key == "train.total_steps") c.total_steps = parse_int64_value(key, value);
    else if (key == "train.warmup_steps") c.warmup_steps = parse_int64_value(key, value);
    else if (key == "train.lr") c.peak_lr = parse_double_value(key, value);
    else if (key == "train.batch_size") c.batch_size = parse_int_value(key, value);
    else if (key == "train.seed") c.seed = static_cast<std::uint64_t>(parse_int64_value(key, value));
    else if (key == "train.checkpoint_every") c.checkpoint_every = parse_int64_value(key, value);
    else if (key == "train.log_every") c.log_every = parse_int64_value(key, value);
    else if (key == "train.lambda_tag") c.lambda_tag = parse_double_value(key, value);
    else if (key == "train.shuffle") c.shuffle = parse_bool_value(key, value);
    else if (key == "train.weight_decay") c.adamw.weight_decay = parse_double_value(key, value);
    else if (key == "train.beta1") c.adamw.beta1 = parse_double_value(key, value);
    else if (key == "train.beta2") c.adamw.beta2 = parse_double_value(key, value);
    else if (key == "train.adam_eps") c.adamw.eps = parse_double_value(key, value);
    else throw InvalidArgument("unknown config key '" + key + "'");
  }
  return c;
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  auto num = [](auto v) { return fmt::format("{}", v); };
  kv["paths.corpus"] = corpus_path;
  kv["paths.tokenizer"] = tokenizer_path;
  kv["paths.output_dir"] = output_dir;
  kv["curriculum.name"] = std::string(curriculum::to_string(curriculum));
  if (boundaries) kv["curriculum.boundaries"] = fmt::format("{}", fmt::join(*boundaries, ","));
  kv["curriculum.active_ratio"] = num(masking.active_ratio);
  kv["curriculum.base_ratio"] = num(masking.base_ratio);
  kv["model.n_layers"] = num(model.n_layers);
  kv["model.n_heads"] = num(model.n_heads);
  kv["model.hidden"] = num(model.hidden);
  kv["model.ffn_mult"] = num(model.ffn_mult);
  kv["model.max_seq_len"] = num(model.max_seq_len);
  kv["model.layer_norm_eps"] = num(model.layer_norm_eps);
  kv["model.dropout"] = num(model.dropout);
  kv["train.total_steps"] = num(total_steps);
  kv["train.warmup_steps"] = num(warmup_steps);
  kv["train.lr"] = num(peak_lr);
  kv["train.batch_size"] = num(batch_size);
  kv["train.seed"] = num(seed);
  kv["train.checkpoint_every"] = num(checkpoint_every);
  kv["train.log_every"] = num(log_every);
  kv["train.lambda_tag"] = num(lambda_tag);
  kv["train.shuffle"] = shuffle ? "true" : "false";
  kv["train.weight_decay"] = num(adamw.weight_decay);
  kv["train.beta1"] = num(adamw.beta1);
  kv["train.beta2"] = num(adamw.beta2);
  kv["train.adam_eps"] = num(adamw.eps);
  return kv;
}

std::vector<TaggedTokens> tokenize_tagged_corpus(const Tokenizer& tokenizer,
                                                 std::span<const tagging::TaggedSentence> sentences) {
  std::vector<TaggedTokens> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    const auto tok = tokenizer.encode(s.text());
    out.push_back({tok.token_ids, tagging::align_tags_to_subwords(s, tok)});
  }
  return out;
}

std::vector<TaggedTokens> pack_sequences(std::span<const TaggedTokens> sentences, int max_seq_len) {
  if (max_seq_len < 1) throw InvalidArgument("max_seq_len must be positive");
  const auto cap = static_cast<std::size_t>(max_seq_len);
  std::vector<TaggedTokens> out;
  TaggedTokens current;
  auto flush = [&] {
    if (!current.ids.empty()) out.push_back(std::move(current));
    current = {};
  };
  for (const auto& s : sentences) {
    if (s.ids.empty()) continue;
    const auto need = s.ids.size() + 1;
    if (current.ids.size() + need > cap) flush();
    for (std::size_t i = 0; i < need; ++i) {
      if (current.ids.size() == cap) flush();
      if (i < s.ids.size()) {
        current.ids.push_back(s.ids[i]);
        current.tags.push_back(s.tags[i]);
      } else {
        current.ids.push_back(Tokenizer::kEos);
        current.tags.push_back({});
      }
    }
  }
  flush();
  return out;
}

std::string metrics_csv_header() {
  return "step,stage,lr,mlm_loss,tag_loss,masked_fraction_active,masked_fraction_base,epoch";
}

std::string format_metrics_row(const MetricsRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{}", r.step, r.stage, r.lr, r.mlm_loss, r.tag_loss,
                     r.masked_fraction_active, r.masked_fraction_base, r.epoch);
}

Trainer::Trainer(TrainConfig config, Tokenizer tokenizer, std::span<const tagging::TaggedSentence> corpus)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)) {
  config_.model.vocab_size = tokenizer_.vocab_size();
  config_.model.n_tag_labels = tagging::TagVocabulary::standard().n_labels();
  config_.validate();
  schedule_ = curriculum::build_schedule(config_.curriculum, config_.total_steps, config_.boundaries,
                                         config_.masking);
  const auto tokens = tokenize_tagged_corpus(tokenizer_, corpus);
  sequences_ = pack_sequences(tokens, config_.model.max_seq_len);
  if (sequences_.empty()) throw InvalidArgument("training corpus is empty");
  params_ = model::init_model<float>(config_.model, derive_seed(config_.seed, Stream::Init, 0));
  optimizer_ = model::OptimizerState<float>::zeros(params_.data.size());
}

MaskedBatch Trainer::prepare_batch(std::int64_t step) const {
  const auto& stage = curriculum::active_stage(schedule_, step);
  const auto n = static_cast<std::int64_t>(sequences_.size());
  const auto B = config_.batch_size;
  const std::int64_t first = step * B;

  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm;
  auto sequence_at = [&](std::int64_t global) -> const TaggedTokens& {
    const auto epoch = global / n;
    const auto index = static_cast<std::size_t>(global % n);
    if (!config_.shuffle) return sequences_[index];
    if (epoch != cached_epoch) {
      perm.resize(static_cast<std::size_t>(n));
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      Rng rng(derive_seed(config_.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      cached_epoch = epoch;
    }
    return sequences_[perm[index]];
  };

  int S = 1;
  for (int j = 0; j < B; ++j) S = std::max(S, static_cast<int>(sequence_at(first + j).ids.size()));

  MaskedBatch mb;
  mb.epoch = first / n;
  auto& in = mb.input;
  in.batch = B;
  in.seq = S;
  const auto rows = static_cast<std::size_t>(B) * static_cast<std::size_t>(S);
  in.ids.assign(rows, Tokenizer::kPad);
  in.valid.assign(rows, 0);
  std::vector<tagging::TokenTags> tags(rows);
  std::vector<std::uint8_t> maskable(rows, 0);
  for (int j = 0; j < B; ++j) {
    const auto& seq = sequence_at(first + j);
    for (std::size_t t = 0; t < seq.ids.size(); ++t) {
      const auto r = static_cast<std::size_t>(j) * static_cast<std::size_t>(S) + t;
      const auto id = seq.ids[t];
      in.ids[r] = id;
      in.valid[r] = 1;
      tags[r] = seq.tags[t];
      maskable[r] = (id == Tokenizer::kPad || id == Tokenizer::kMask || id == Tokenizer::kBos ||
                     id == Tokenizer::kEos) ? 0 : 1;
    }
  }

  Rng rng(derive_seed(config_.seed, Stream::Mask, static_cast<std::uint64_t>(step)));
  const auto mask = curriculum::select_masks(tags, maskable, stage, rng);
  mb.targets.vocab_target.assign(rows, -1);
  mb.targets.tag_target.assign(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (in.valid[r]) ++mb.n_tokens;
    mb.targets.tag_target[r] = tags[r].upos;
    if (!maskable[r]) continue;
    const bool active = stage.matches(tags[r]);
    (active ? mb.active_total : mb.base_total) += 1;
    if (mask[r]) {
      (active ? mb.active_masked : mb.base_masked) += 1;
      mb.targets.vocab_target[r] = in.ids[r];
      in.ids[r] = Tokenizer::kMask;
    }
  }
  return mb;
}

void Trainer::resume(const Checkpoint& ck) {
  if (ck.tokenizer_hash != tokenizer_.hash()) {
    throw InvalidArgument("checkpoint was trained with a different tokenizer (hash " +
                          format_hash(ck.tokenizer_hash) + ")");
  }
  if (!(ck.params.config == config_.model)) throw InvalidArgument("checkpoint model config differs from config");
  if (!ck.optimizer) throw InvalidArgument("checkpoint has no optimizer state; cannot resume");
  if (ck.step < 0 || ck.step > config_.total_steps) throw InvalidArgument("checkpoint step outside the run");
  params_ = ck.params;
  optimizer_ = *ck.optimizer;
  step_ = ck.step;
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ck;
  ck.params = params_;
  ck.optimizer = optimizer_;
  ck.step = step_;
  ck.tokenizer_hash = tokenizer_.hash();
  ck.tag_vocabulary = tagging::TagVocabulary::standard().names_by_id();
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_.to_key_values()) j[k] = v;
  ck.train_config_json = j.dump();
  return ck;
}

void Trainer::write_checkpoint(const std::string& name, TrainResult& result) const {
  if (config_.output_dir.empty()) return;
  const auto path = (fs::path(config_.output_dir) / name).string();
  save_checkpoint(path, make_checkpoint());
  result.checkpoints.push_back(path);
}

void Trainer::open_metrics_file() {
  if (config_.output_dir.empty()) return;
  fs::create_directories(config_.output_dir);
  const auto path = fs::path(config_.output_dir) / "metrics.csv";
  std::vector<std::string> kept;
  if (step_ > 0 && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) < step_) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << metrics_csv_header() << '\n';
  for (const auto& line : kept) out << line << '\n';
}

TrainResult Trainer::run(std::optional<std::int64_t> until) {
  const auto end = std::min(until.value_or(config_.total_steps), config_.total_steps);
  TrainResult result;
  open_metrics_file();
  std::ofstream metrics;
  if (!config_.output_dir.empty()) {
    metrics.open(fs::path(config_.output_dir) / "metrics.csv", std::ios::app);
  }

  auto is_stage_start = [&](std::int64_t s) {
    return std::any_of(schedule_.stages.begin() + 1, schedule_.stages.end(),
                       [s](const curriculum::Stage& st) { return st.start_step() == s; });
  };

  for (std::int64_t s = step_; s < end; ++s) {
    const auto& stage = curriculum::active_stage(schedule_, s);
    const auto batch = prepare_batch(s);
    const double lr = model::lr_at(s, config_.total_steps, config_.warmup_steps, config_.peak_lr);
    const model::LossSpec spec{curriculum::active_tag_ids(stage), config_.lambda_tag};
    const model::ForwardOptions opts{true, derive_seed(config_.seed, Stream::Dropout, static_cast<std::uint64_t>(s))};
    auto lg = model::loss_and_gradients(params_, batch.input, batch.targets, spec, opts);

    if (!std::isfinite(lg.value.total)) {
      write_checkpoint(fmt::format("diagnostic-step-{:09d}.ckpt", s), result);
      throw Error("non-finite-loss", fmt::format("non-finite loss {} at step {} (stage {})", lg.value.total, s,
                                                 stage.unit().name));
    }
    model::adamw_step(params_, std::span<const float>(lg.grads), optimizer_, lr, config_.adamw);
    step_ = s + 1;
    result.tokens_consumed += batch.n_tokens;

    if (s % config_.log_every == 0 || s == config_.total_steps - 1) {
      constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
      MetricsRow row;
      row.step = s;
      row.stage = stage.unit().name;
      row.lr = lr;
      row.mlm_loss = lg.value.mlm;
      row.tag_loss = lg.value.tag;
      row.masked_fraction_active =
          batch.active_total ? static_cast<double>(batch.active_masked) / static_cast<double>(batch.active_total) : kNaN;
      row.masked_fraction_base =
          batch.base_total ? static_cast<double>(batch.base_masked) / static_cast<double>(batch.base_total) : kNaN;
      row.epoch = batch.epoch;
      if (metrics.is_open()) metrics << format_metrics_row(row) << '\n' << std::flush;
      result.metrics.push_back(std::move(row));
    }

    if (step_ == config_.total_steps) {
      write_checkpoint("final.ckpt", result);
    } else if ((config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0) || is_stage_start(step_)) {
      write_checkpoint(fmt::format("step-{:09d}.ckpt", step_), result);
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config, const std::optional<std::string>& resume_from) {
  if (config.corpus_path.empty() || config.tokenizer_path.empty()) {
    throw InvalidArgument("paths.corpus and paths.tokenizer are required");
  }
  const auto corpus = tagging::load_tagged_corpus_file(config.corpus_path);
  auto tokenizer = Tokenizer::load(config.tokenizer_path);
  Trainer trainer(config, std::move(tokenizer), corpus);
  if (resume_from) trainer.resume(load_checkpoint(*resume_from));
  return trainer.run();
}

}  // namespace curlm::trainer

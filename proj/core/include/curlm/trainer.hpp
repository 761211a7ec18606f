#pragma once

// Training loop: sequence packing, curriculum-driven masking, the two-headed
// loss, AdamW updates, checkpoints and the metrics log.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curlm/checkpoint.hpp"
#include "curlm/config.hpp"
#include "curlm/curriculum.hpp"
#include "curlm/model.hpp"
#include "curlm/tagging.hpp"
#include "curlm/tokenizer.hpp"

namespace curlm::trainer {

struct TrainConfig {
  std::string corpus_path;     // tagged TSV, in age order
  std::string tokenizer_path;  // tokenizer JSON
  std::string output_dir;      // metrics.csv and checkpoints; empty = in memory only

  curriculum::CurriculumName curriculum = curriculum::CurriculumName::None;
  std::optional<std::vector<double>> boundaries;
  curriculum::MaskingPolicy masking;

  model::ModelConfig model;  // vocab_size and n_tag_labels are filled in from the data
  model::AdamWConfig adamw;

  std::int64_t total_steps = 400000;
  std::int64_t warmup_steps = 100000;
  double peak_lr = 0.001;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::int64_t log_every = 50;
  double lambda_tag = 1.0;
  bool shuffle = false;

  /// Throws InvalidArgument when warmup_steps >= total_steps, batch_size < 1, ...
  void validate() const;

  /// Recognised keys: paths.{corpus,tokenizer,output_dir},
  /// curriculum.{name,boundaries,active_ratio,base_ratio},
  /// model.{n_layers,n_heads,hidden,ffn_mult,max_seq_len,layer_norm_eps,dropout,preset},
  /// train.{total_steps,warmup_steps,lr,batch_size,seed,checkpoint_every,log_every,
  /// lambda_tag,shuffle,weight_decay,beta1,beta2,adam_eps}.
  /// Unknown keys are rejected.
  static TrainConfig from_key_values(const KeyValues& values);
  KeyValues to_key_values() const;
};

/// Subword ids of one sentence with per-token tags.
struct TaggedTokens {
  std::vector<std::int32_t> ids;
  std::vector<tagging::TokenTags> tags;
};

std::vector<TaggedTokens> tokenize_tagged_corpus(const Tokenizer& tokenizer,
                                                 std::span<const tagging::TaggedSentence> sentences);

/// Greedy packing with an EOS after every sentence: a sentence (plus its EOS)
/// goes into the current sequence if it fits, otherwise a new sequence is
/// started; sentences longer than max_seq_len are split across sequences.
/// Order is preserved.
std::vector<TaggedTokens> pack_sequences(std::span<const TaggedTokens> sentences, int max_seq_len);

struct MaskedBatch {
  model::TokenBatch input;  // masked positions hold the MASK id
  model::LossTargets targets;
  std::int64_t epoch = 0;
  std::int64_t n_tokens = 0;  // non-pad tokens
  std::int64_t active_total = 0, active_masked = 0;
  std::int64_t base_total = 0, base_masked = 0;
};

struct MetricsRow {
  std::int64_t step = 0;
  std::string stage;
  double lr = 0.0;
  double mlm_loss = 0.0;
  double tag_loss = 0.0;
  double masked_fraction_active = 0.0;  // NaN when the batch had no active tokens
  double masked_fraction_base = 0.0;
  std::int64_t epoch = 0;
};

std::string metrics_csv_header();
std::string format_metrics_row(const MetricsRow& row);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<std::string> checkpoints;
  std::int64_t tokens_consumed = 0;
};

class Trainer {
 public:
  /// `config.model.vocab_size` / `n_tag_labels` are overwritten from the
  /// tokenizer and tag vocabulary.
  Trainer(TrainConfig config, Tokenizer tokenizer, std::span<const tagging::TaggedSentence> corpus);

  const TrainConfig& config() const { return config_; }
  const curriculum::CurriculumSchedule& schedule() const { return schedule_; }
  const std::vector<TaggedTokens>& sequences() const { return sequences_; }
  const model::ModelParams<float>& params() const { return params_; }
  const model::OptimizerState<float>& optimizer() const { return optimizer_; }
  std::int64_t step() const { return step_; }

  /// Batch for `step`, derived only from (seed, step) and the packed corpus.
  MaskedBatch prepare_batch(std::int64_t step) const;

  /// Restores parameters, optimizer state and the step counter. Throws when
  /// the checkpoint's tokenizer hash or model config differ.
  void resume(const Checkpoint& checkpoint);

  Checkpoint make_checkpoint() const;

  /// Runs steps [step(), until) (default: to total_steps). Throws
  /// Error("non-finite-loss") after writing a diagnostic checkpoint.
  TrainResult run(std::optional<std::int64_t> until = std::nullopt);

 private:
  void write_checkpoint(const std::string& name, TrainResult& result) const;
  void open_metrics_file();

  TrainConfig config_;
  Tokenizer tokenizer_;
  curriculum::CurriculumSchedule schedule_;
  std::vector<TaggedTokens> sequences_;
  model::ModelParams<float> params_;
  model::OptimizerState<float> optimizer_;
  std::int64_t step_ = 0;
};

/// Loads the corpus and tokenizer named in the config and trains; resumes
/// from `resume_from` when given.
TrainResult train(const TrainConfig& config, const std::optional<std::string>& resume_from = std::nullopt);

}  // namespace curlm::trainer

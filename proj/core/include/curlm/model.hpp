#pragma once

// Pre-norm transformer encoder with a masked-LM head and a tag-classification
// head, hand-written forward/backward passes, AdamW and the linear
// warmup/decay learning-rate schedule.
//
// Everything is templated on the scalar type: training runs in float, while
// gradient checks and scoring oracles instantiate the same code in double.

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace curlm::model {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int hidden = 64;
  int ffn_mult = 4;
  int vocab_size = 8192;
  int n_tag_labels = 32;
  int max_seq_len = 128;
  double layer_norm_eps = 1e-5;
  double dropout = 0.1;

  /// 2 layers, 4 heads, hidden 64.
  static ModelConfig desk();
  /// 8 layers, 8 heads, hidden 256, vocabulary 8192.
  static ModelConfig full_scale();

  int head_dim() const { return hidden / n_heads; }
  int ffn_dim() const { return hidden * ffn_mult; }

  /// Throws InvalidArgument on non-positive dims or hidden % n_heads != 0.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool decay = false;  // AdamW weight decay applies (not biases / layer norms)
};

/// Offsets of every tensor inside the flat parameter buffer.
struct ParamLayout {
  struct Layer {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::vector<TensorInfo> tensors;
  std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0;
  std::size_t vocab_w = 0, vocab_b = 0, tag_w = 0, tag_b = 0;
  std::vector<Layer> layers;
  std::size_t total = 0;

  static ParamLayout build(const ModelConfig& config);
};

template <typename Real>
struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  std::vector<Real> data;

  std::span<Real> tensor(const std::string& name);
  std::span<const Real> tensor(const std::string& name) const;
};

/// Weights ~ Normal(0, 0.02); layer-norm gains 1; biases and shifts 0.
template <typename Real>
ModelParams<Real> init_model(const ModelConfig& config, std::uint64_t seed);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params);

/// Row-major [batch x seq] token ids; `valid` is 0 at padded positions.
struct TokenBatch {
  int batch = 0;
  int seq = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> valid;

  int rows() const { return batch * seq; }
};

struct ForwardOptions {
  bool training = false;           // dropout is active only when training
  std::uint64_t dropout_seed = 0;
};

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// Activations kept for the backward pass. Row r of every [rows x *] matrix
/// is (batch r / seq, position r % seq).
template <typename Real>
struct ForwardCache {
  struct LayerNormCache {
    Matrix<Real> xhat;
    Vector<Real> rstd;
  };
  struct Layer {
    LayerNormCache ln1, ln2;
    Matrix<Real> h1, q, k, v, probs, ctx, attn_out, drop1, h2, ff_pre, ff_act, ff_out, drop2;
  };
  TokenBatch batch;
  std::vector<Layer> layers;
  LayerNormCache lnf;
  Matrix<Real> final_hidden;
  Matrix<Real> vocab_logits;  // [rows x V]
  Matrix<Real> tag_logits;    // [rows x T]
};

/// Throws InvalidArgument on ids >= V, seq > max_seq_len or size mismatches.
template <typename Real>
ForwardCache<Real> forward(const ModelParams<Real>& params, const TokenBatch& batch,
                           const ForwardOptions& options = {});

/// Per-row training targets. vocab_target < 0 marks a row that is not masked.
/// tag_target is the row's tag id (0 = none); only masked rows are read.
struct LossTargets {
  std::vector<std::int32_t> vocab_target;
  std::vector<std::int32_t> tag_target;
};

struct LossSpec {
  std::set<std::int32_t> active_tag_ids;
  double lambda_tag = 1.0;
};

struct LossValue {
  double total = 0.0;
  double mlm = 0.0;
  double tag = 0.0;
  int n_masked = 0;
  int n_tagged = 0;
};

template <typename Real>
struct LogitGradients {
  Matrix<Real> vocab;
  Matrix<Real> tag;
};

/// total = CE_vocab + lambda_tag * CE_tag. CE_vocab averages over masked
/// rows; CE_tag averages over masked rows whose tag is in active_tag_ids
/// (other tags are relabeled 0 and skipped). No masked rows gives 0.
/// Softmax uses max subtraction. When `grads` is non-null it receives
/// dL/dlogits.
template <typename Real>
LossValue loss(const Matrix<Real>& vocab_logits, const Matrix<Real>& tag_logits,
               const LossTargets& targets, const LossSpec& spec, LogitGradients<Real>* grads = nullptr);

/// Exact gradient of the loss with respect to every parameter, laid out like
/// params.data.
template <typename Real>
std::vector<Real> backward(const ModelParams<Real>& params, const ForwardCache<Real>& cache,
                           const LogitGradients<Real>& logit_grads);

template <typename Real>
struct LossAndGradients {
  LossValue value;
  std::vector<Real> grads;
};

template <typename Real>
LossAndGradients<Real> loss_and_gradients(const ModelParams<Real>& params, const TokenBatch& batch,
                                          const LossTargets& targets, const LossSpec& spec,
                                          const ForwardOptions& options = {});

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename Real>
struct OptimizerState {
  std::vector<Real> m;
  std::vector<Real> v;
  std::int64_t step = 0;

  static OptimizerState zeros(std::size_t n) { return {std::vector<Real>(n), std::vector<Real>(n), 0}; }
};

/// Decoupled weight decay (p *= 1 - lr*wd on decaying tensors) followed by the
/// bias-corrected Adam update.
template <typename Real>
void adamw_step(ModelParams<Real>& params, std::span<const Real> grads, OptimizerState<Real>& state,
                double lr, const AdamWConfig& config = {});

/// Linear ramp 0 -> peak over `warmup` steps, then linear decay to 0 at
/// max_steps.
double lr_at(std::int64_t step, std::int64_t max_steps = 400000, std::int64_t warmup = 100000,
             double peak = 0.001);

}  // namespace curlm::model

#include "curlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "curlm/error.hpp"
#include "curlm/rng.hpp"

namespace curlm::model {
namespace {

template <typename Real>
using MapMat = Eigen::Map<Matrix<Real>>;
template <typename Real>
using ConstMapMat = Eigen::Map<const Matrix<Real>>;
template <typename Real>
using ConstMapRow = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>;
template <typename Real>
using MapRow = Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename Real>
ConstMapMat<Real> weight(const ModelParams<Real>& p, std::size_t offset, int rows, int cols) {
  return ConstMapMat<Real>(p.data.data() + offset, rows, cols);
}

template <typename Real>
ConstMapRow<Real> bias(const ModelParams<Real>& p, std::size_t offset, int n) {
  return ConstMapRow<Real>(p.data.data() + offset, n);
}

template <typename Real>
MapMat<Real> grad_weight(std::vector<Real>& g, std::size_t offset, int rows, int cols) {
  return MapMat<Real>(g.data() + offset, rows, cols);
}

template <typename Real>
MapRow<Real> grad_bias(std::vector<Real>& g, std::size_t offset, int n) {
  return MapRow<Real>(g.data() + offset, n);
}

template <typename Real>
Matrix<Real> layer_norm(const Matrix<Real>& x, const ModelParams<Real>& p, std::size_t g_off,
                        std::size_t b_off, typename ForwardCache<Real>::LayerNormCache& cache) {
  const auto rows = x.rows();
  const auto h = x.cols();
  const Real eps = static_cast<Real>(p.config.layer_norm_eps);
  cache.xhat.resize(rows, h);
  cache.rstd.resize(rows);
  const auto gain = bias(p, g_off, static_cast<int>(h));
  const auto shift = bias(p, b_off, static_cast<int>(h));
  Matrix<Real> y(rows, h);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Real mean = x.row(r).mean();
    const Real var = (x.row(r).array() - mean).square().mean();
    const Real rstd = Real(1) / std::sqrt(var + eps);
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
    y.row(r) = cache.xhat.row(r).array() * gain.array() + shift.array();
  }
  return y;
}

// dy -> dx, accumulating gain/shift gradients.
template <typename Real>
Matrix<Real> layer_norm_backward(const Matrix<Real>& dy, const ModelParams<Real>& p, std::size_t g_off,
                                 std::size_t b_off, const typename ForwardCache<Real>::LayerNormCache& cache,
                                 std::vector<Real>& grads) {
  const auto rows = dy.rows();
  const int h = static_cast<int>(dy.cols());
  const auto gain = bias(p, g_off, h);
  auto dgain = grad_bias(grads, g_off, h);
  auto dshift = grad_bias(grads, b_off, h);
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dshift += dy.colwise().sum();
  Matrix<Real> dx(rows, h);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto dxhat = (dy.row(r).array() * gain.array()).eval();
    const Real mean_d = dxhat.mean();
    const Real mean_dx = (dxhat * cache.xhat.row(r).array()).mean();
    dx.row(r) = cache.rstd(r) * (dxhat - mean_d - cache.xhat.row(r).array() * mean_dx);
  }
  return dx;
}

template <typename Real>
Real gelu(Real x) {
  return static_cast<Real>(0.5) * x * (Real(1) + std::erf(x * static_cast<Real>(kInvSqrt2)));
}

template <typename Real>
Real gelu_grad(Real x) {
  const Real cdf = static_cast<Real>(0.5) * (Real(1) + std::erf(x * static_cast<Real>(kInvSqrt2)));
  const Real pdf = static_cast<Real>(kInvSqrt2Pi) * std::exp(static_cast<Real>(-0.5) * x * x);
  return cdf + x * pdf;
}

template <typename Real>
Matrix<Real> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix<Real> mask(rows, cols);
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < p ? Real(0) : keep_scale;
  }
  return mask;
}

void check_batch(const ModelConfig& config, const TokenBatch& batch) {
  if (batch.batch <= 0 || batch.seq <= 0) throw InvalidArgument("batch dimensions must be positive");
  const auto n = static_cast<std::size_t>(batch.rows());
  if (batch.ids.size() != n || batch.valid.size() != n) {
    throw InvalidArgument("token batch size does not match batch x seq");
  }
  if (batch.seq > config.max_seq_len) {
    throw InvalidArgument("sequence length " + std::to_string(batch.seq) + " exceeds max_seq_len " +
                          std::to_string(config.max_seq_len));
  }
  for (auto id : batch.ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

}  // namespace

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.n_layers = 8;
  c.n_heads = 8;
  c.hidden = 256;
  c.vocab_size = 8192;
  return c;
}

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || hidden <= 0 || ffn_mult <= 0 || vocab_size <= 0 ||
      n_tag_labels <= 0 || max_seq_len <= 0) {
    throw InvalidArgument("model dimensions must be positive");
  }
  if (hidden % n_heads != 0) throw InvalidArgument("hidden must be divisible by n_heads");
  if (!(layer_norm_eps > 0.0)) throw InvalidArgument("layer_norm_eps must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("dropout must lie in [0, 1)");
}

ParamLayout ParamLayout::build(const ModelConfig& c) {
  c.validate();
  ParamLayout layout;
  const int h = c.hidden;
  const int f = c.ffn_dim();
  auto add = [&](std::string name, std::vector<int> shape, bool decay) {
    std::size_t size = 1;
    for (int d : shape) size *= static_cast<std::size_t>(d);
    const auto offset = layout.total;
    layout.tensors.push_back({std::move(name), std::move(shape), offset, size, decay});
    layout.total += size;
    return offset;
  };
  layout.tok_emb = add("tok_emb", {c.vocab_size, h}, true);
  layout.pos_emb = add("pos_emb", {c.max_seq_len, h}, true);
  for (int l = 0; l < c.n_layers; ++l) {
    const auto p = "layers." + std::to_string(l) + ".";
    Layer L{};
    L.ln1_g = add(p + "ln1.gain", {h}, false);
    L.ln1_b = add(p + "ln1.shift", {h}, false);
    L.wq = add(p + "attn.wq", {h, h}, true);
    L.bq = add(p + "attn.bq", {h}, false);
    L.wk = add(p + "attn.wk", {h, h}, true);
    L.bk = add(p + "attn.bk", {h}, false);
    L.wv = add(p + "attn.wv", {h, h}, true);
    L.bv = add(p + "attn.bv", {h}, false);
    L.wo = add(p + "attn.wo", {h, h}, true);
    L.bo = add(p + "attn.bo", {h}, false);
    L.ln2_g = add(p + "ln2.gain", {h}, false);
    L.ln2_b = add(p + "ln2.shift", {h}, false);
    L.w1 = add(p + "ffn.w1", {h, f}, true);
    L.b1 = add(p + "ffn.b1", {f}, false);
    L.w2 = add(p + "ffn.w2", {f, h}, true);
    L.b2 = add(p + "ffn.b2", {h}, false);
    layout.layers.push_back(L);
  }
  layout.lnf_g = add("final_ln.gain", {h}, false);
  layout.lnf_b = add("final_ln.shift", {h}, false);
  layout.vocab_w = add("vocab_head.w", {h, c.vocab_size}, true);
  layout.vocab_b = add("vocab_head.b", {c.vocab_size}, false);
  layout.tag_w = add("tag_head.w", {h, c.n_tag_labels}, true);
  layout.tag_b = add("tag_head.b", {c.n_tag_labels}, false);
  return layout;
}

template <typename Real>
std::span<Real> ModelParams<Real>::tensor(const std::string& name) {
  for (const auto& t : layout.tensors) {
    if (t.name == name) return {data.data() + t.offset, t.size};
  }
  throw InvalidArgument("no parameter tensor named '" + name + "'");
}

template <typename Real>
std::span<const Real> ModelParams<Real>::tensor(const std::string& name) const {
  for (const auto& t : layout.tensors) {
    if (t.name == name) return {data.data() + t.offset, t.size};
  }
  throw InvalidArgument("no parameter tensor named '" + name + "'");
}

template <typename Real>
ModelParams<Real> init_model(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<Real> p;
  p.config = config;
  p.layout = ParamLayout::build(config);
  p.data.assign(p.layout.total, Real(0));
  Rng rng(seed);
  for (const auto& t : p.layout.tensors) {
    const bool is_gain = t.name.ends_with(".gain");
    for (std::size_t i = 0; i < t.size; ++i) {
      Real value = Real(0);
      if (is_gain) {
        value = Real(1);
      } else if (t.decay) {
        value = static_cast<Real>(0.02 * rng.normal());
      }
      p.data[t.offset + i] = value;
    }
  }
  return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params) {
  ModelParams<To> out;
  out.config = params.config;
  out.layout = params.layout;
  out.data.assign(params.data.begin(), params.data.end());
  return out;
}

template <typename Real>
ForwardCache<Real> forward(const ModelParams<Real>& params, const TokenBatch& batch,
                           const ForwardOptions& options) {
  const auto& c = params.config;
  const auto& L = params.layout;
  check_batch(c, batch);
  const int rows = batch.rows();
  const int S = batch.seq;
  const int H = c.hidden;
  const int F = c.ffn_dim();
  const int nh = c.n_heads;
  const int d = c.head_dim();
  const Real scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(d)));
  const bool use_dropout = options.training && c.dropout > 0.0;
  Rng rng(options.dropout_seed);

  ForwardCache<Real> cache;
  cache.batch = batch;
  cache.layers.resize(static_cast<std::size_t>(c.n_layers));

  const auto tok = weight(params, L.tok_emb, c.vocab_size, H);
  const auto pos = weight(params, L.pos_emb, c.max_seq_len, H);
  Matrix<Real> x(rows, H);
  for (int r = 0; r < rows; ++r) {
    x.row(r) = tok.row(batch.ids[static_cast<std::size_t>(r)]) + pos.row(r % S);
  }

  for (int l = 0; l < c.n_layers; ++l) {
    const auto& W = L.layers[static_cast<std::size_t>(l)];
    auto& lc = cache.layers[static_cast<std::size_t>(l)];

    lc.h1 = layer_norm(x, params, W.ln1_g, W.ln1_b, lc.ln1);
    lc.q = (lc.h1 * weight(params, W.wq, H, H)).rowwise() + bias(params, W.bq, H);
    lc.k = (lc.h1 * weight(params, W.wk, H, H)).rowwise() + bias(params, W.bk, H);
    lc.v = (lc.h1 * weight(params, W.wv, H, H)).rowwise() + bias(params, W.bv, H);

    lc.probs.resize(static_cast<Eigen::Index>(batch.batch) * nh * S, S);
    lc.ctx.resize(rows, H);
    for (int b = 0; b < batch.batch; ++b) {
      for (int hd = 0; hd < nh; ++hd) {
        const auto Q = lc.q.block(b * S, hd * d, S, d);
        const auto K = lc.k.block(b * S, hd * d, S, d);
        const auto V = lc.v.block(b * S, hd * d, S, d);
        auto P = lc.probs.block((static_cast<Eigen::Index>(b) * nh + hd) * S, 0, S, S);
        P.noalias() = (Q * K.transpose()) * scale;
        for (int i = 0; i < S; ++i) {
          Real max_score = -std::numeric_limits<Real>::infinity();
          for (int j = 0; j < S; ++j) {
            if (batch.valid[static_cast<std::size_t>(b * S + j)]) max_score = std::max(max_score, P(i, j));
          }
          Real sum = 0;
          for (int j = 0; j < S; ++j) {
            if (batch.valid[static_cast<std::size_t>(b * S + j)]) {
              P(i, j) = std::exp(P(i, j) - max_score);
              sum += P(i, j);
            } else {
              P(i, j) = 0;
            }
          }
          if (sum > 0) P.row(i) /= sum;
        }
        lc.ctx.block(b * S, hd * d, S, d).noalias() = P * V;
      }
    }
    lc.attn_out = (lc.ctx * weight(params, W.wo, H, H)).rowwise() + bias(params, W.bo, H);
    if (use_dropout) {
      lc.drop1 = dropout_mask<Real>(rows, H, c.dropout, rng);
      x += lc.attn_out.cwiseProduct(lc.drop1);
    } else {
      x += lc.attn_out;
    }

    lc.h2 = layer_norm(x, params, W.ln2_g, W.ln2_b, lc.ln2);
    lc.ff_pre = (lc.h2 * weight(params, W.w1, H, F)).rowwise() + bias(params, W.b1, F);
    lc.ff_act = lc.ff_pre.unaryExpr([](Real v) { return gelu(v); });
    lc.ff_out = (lc.ff_act * weight(params, W.w2, F, H)).rowwise() + bias(params, W.b2, H);
    if (use_dropout) {
      lc.drop2 = dropout_mask<Real>(rows, H, c.dropout, rng);
      x += lc.ff_out.cwiseProduct(lc.drop2);
    } else {
      x += lc.ff_out;
    }
  }

  cache.final_hidden = layer_norm(x, params, L.lnf_g, L.lnf_b, cache.lnf);
  cache.vocab_logits = (cache.final_hidden * weight(params, L.vocab_w, H, c.vocab_size)).rowwise() +
                       bias(params, L.vocab_b, c.vocab_size);
  cache.tag_logits = (cache.final_hidden * weight(params, L.tag_w, H, c.n_tag_labels)).rowwise() +
                     bias(params, L.tag_b, c.n_tag_labels);
  return cache;
}

template <typename Real>
LossValue loss(const Matrix<Real>& vocab_logits, const Matrix<Real>& tag_logits,
               const LossTargets& targets, const LossSpec& spec, LogitGradients<Real>* grads) {
  const auto rows = vocab_logits.rows();
  if (static_cast<Eigen::Index>(targets.vocab_target.size()) != rows ||
      static_cast<Eigen::Index>(targets.tag_target.size()) != rows || tag_logits.rows() != rows) {
    throw InvalidArgument("loss targets do not match logits rows");
  }
  LossValue value;
  std::vector<Eigen::Index> masked, tagged;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto vt = targets.vocab_target[static_cast<std::size_t>(r)];
    if (vt < 0) continue;
    if (vt >= vocab_logits.cols()) throw InvalidArgument("vocab target outside vocabulary");
    masked.push_back(r);
    const auto tt = targets.tag_target[static_cast<std::size_t>(r)];
    if (tt != 0 && spec.active_tag_ids.contains(tt)) {
      if (tt < 0 || tt >= tag_logits.cols()) throw InvalidArgument("tag target outside tag labels");
      tagged.push_back(r);
    }
  }
  value.n_masked = static_cast<int>(masked.size());
  value.n_tagged = static_cast<int>(tagged.size());
  if (grads) {
    grads->vocab = Matrix<Real>::Zero(rows, vocab_logits.cols());
    grads->tag = Matrix<Real>::Zero(rows, tag_logits.cols());
  }

  // Mean cross-entropy over `which`, gradient scaled by `weight / n`.
  auto cross_entropy = [&](const Matrix<Real>& logits, const std::vector<Eigen::Index>& which,
                           const std::vector<std::int32_t>& target, double weight, Matrix<Real>* g) {
    double sum = 0.0;
    const double inv_n = 1.0 / static_cast<double>(which.size());
    for (auto r : which) {
      const auto t = target[static_cast<std::size_t>(r)];
      const Real max_logit = logits.row(r).maxCoeff();
      const auto shifted = (logits.row(r).array() - max_logit).eval();
      const Real denom = shifted.exp().sum();
      const Real log_z = std::log(denom);
      sum += static_cast<double>(log_z - shifted(t));
      if (g) {
        g->row(r) = (shifted.exp() / denom).matrix() * static_cast<Real>(weight * inv_n);
        (*g)(r, t) -= static_cast<Real>(weight * inv_n);
      }
    }
    return sum * inv_n;
  };

  if (!masked.empty()) {
    value.mlm = cross_entropy(vocab_logits, masked, targets.vocab_target, 1.0, grads ? &grads->vocab : nullptr);
  }
  if (!tagged.empty()) {
    value.tag = cross_entropy(tag_logits, tagged, targets.tag_target, spec.lambda_tag,
                              grads ? &grads->tag : nullptr);
  }
  value.total = value.mlm + spec.lambda_tag * value.tag;
  return value;
}

template <typename Real>
std::vector<Real> backward(const ModelParams<Real>& params, const ForwardCache<Real>& cache,
                           const LogitGradients<Real>& logit_grads) {
  const auto& c = params.config;
  const auto& L = params.layout;
  const auto& batch = cache.batch;
  const int rows = batch.rows();
  const int S = batch.seq;
  const int H = c.hidden;
  const int F = c.ffn_dim();
  const int nh = c.n_heads;
  const int d = c.head_dim();
  const Real scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<Real> g(params.data.size(), Real(0));

  // Output heads.
  grad_weight(g, L.vocab_w, H, c.vocab_size).noalias() += cache.final_hidden.transpose() * logit_grads.vocab;
  grad_bias(g, L.vocab_b, c.vocab_size) += logit_grads.vocab.colwise().sum();
  grad_weight(g, L.tag_w, H, c.n_tag_labels).noalias() += cache.final_hidden.transpose() * logit_grads.tag;
  grad_bias(g, L.tag_b, c.n_tag_labels) += logit_grads.tag.colwise().sum();
  Matrix<Real> dhidden = logit_grads.vocab * weight(params, L.vocab_w, H, c.vocab_size).transpose();
  dhidden.noalias() += logit_grads.tag * weight(params, L.tag_w, H, c.n_tag_labels).transpose();

  Matrix<Real> dx = layer_norm_backward(dhidden, params, L.lnf_g, L.lnf_b, cache.lnf, g);

  for (int l = c.n_layers - 1; l >= 0; --l) {
    const auto& W = L.layers[static_cast<std::size_t>(l)];
    const auto& lc = cache.layers[static_cast<std::size_t>(l)];

    // Feed-forward sublayer: x_out = x_mid + drop(ff_out).
    const Matrix<Real> dff_out = lc.drop2.size() ? Matrix<Real>(dx.cwiseProduct(lc.drop2)) : dx;
    grad_weight(g, W.w2, F, H).noalias() += lc.ff_act.transpose() * dff_out;
    grad_bias(g, W.b2, H) += dff_out.colwise().sum();
    Matrix<Real> dff_pre = dff_out * weight(params, W.w2, F, H).transpose();
    dff_pre.array() *= lc.ff_pre.unaryExpr([](Real v) { return gelu_grad(v); }).array();
    grad_weight(g, W.w1, H, F).noalias() += lc.h2.transpose() * dff_pre;
    grad_bias(g, W.b1, F) += dff_pre.colwise().sum();
    const Matrix<Real> dh2 = dff_pre * weight(params, W.w1, H, F).transpose();
    dx += layer_norm_backward(dh2, params, W.ln2_g, W.ln2_b, lc.ln2, g);

    // Attention sublayer: x_mid = x_in + drop(attn_out).
    const Matrix<Real> dattn = lc.drop1.size() ? Matrix<Real>(dx.cwiseProduct(lc.drop1)) : dx;
    grad_weight(g, W.wo, H, H).noalias() += lc.ctx.transpose() * dattn;
    grad_bias(g, W.bo, H) += dattn.colwise().sum();
    const Matrix<Real> dctx = dattn * weight(params, W.wo, H, H).transpose();

    Matrix<Real> dq(rows, H), dk(rows, H), dv(rows, H);
    for (int b = 0; b < batch.batch; ++b) {
      for (int hd = 0; hd < nh; ++hd) {
        const auto P = lc.probs.block((static_cast<Eigen::Index>(b) * nh + hd) * S, 0, S, S);
        const auto Q = lc.q.block(b * S, hd * d, S, d);
        const auto K = lc.k.block(b * S, hd * d, S, d);
        const auto V = lc.v.block(b * S, hd * d, S, d);
        const auto dC = dctx.block(b * S, hd * d, S, d);
        const Matrix<Real> dP = dC * V.transpose();
        dv.block(b * S, hd * d, S, d).noalias() = P.transpose() * dC;
        Matrix<Real> dScores = P.cwiseProduct(dP);
        const Vector<Real> row_dot = dScores.rowwise().sum();
        dScores = P.cwiseProduct(dP.colwise() - row_dot) * scale;
        dq.block(b * S, hd * d, S, d).noalias() = dScores * K;
        dk.block(b * S, hd * d, S, d).noalias() = dScores.transpose() * Q;
      }
    }
    grad_weight(g, W.wq, H, H).noalias() += lc.h1.transpose() * dq;
    grad_bias(g, W.bq, H) += dq.colwise().sum();
    grad_weight(g, W.wk, H, H).noalias() += lc.h1.transpose() * dk;
    grad_bias(g, W.bk, H) += dk.colwise().sum();
    grad_weight(g, W.wv, H, H).noalias() += lc.h1.transpose() * dv;
    grad_bias(g, W.bv, H) += dv.colwise().sum();
    Matrix<Real> dh1 = dq * weight(params, W.wq, H, H).transpose();
    dh1.noalias() += dk * weight(params, W.wk, H, H).transpose();
    dh1.noalias() += dv * weight(params, W.wv, H, H).transpose();
    dx += layer_norm_backward(dh1, params, W.ln1_g, W.ln1_b, lc.ln1, g);
  }

  auto dtok = grad_weight(g, L.tok_emb, c.vocab_size, H);
  auto dpos = grad_weight(g, L.pos_emb, c.max_seq_len, H);
  for (int r = 0; r < rows; ++r) {
    dtok.row(batch.ids[static_cast<std::size_t>(r)]) += dx.row(r);
    dpos.row(r % S) += dx.row(r);
  }
  return g;
}

template <typename Real>
LossAndGradients<Real> loss_and_gradients(const ModelParams<Real>& params, const TokenBatch& batch,
                                          const LossTargets& targets, const LossSpec& spec,
                                          const ForwardOptions& options) {
  const auto cache = forward(params, batch, options);
  LogitGradients<Real> dlogits;
  LossAndGradients<Real> out;
  out.value = loss(cache.vocab_logits, cache.tag_logits, targets, spec, &dlogits);
  out.grads = backward(params, cache, dlogits);
  return out;
}

template <typename Real>
void adamw_step(ModelParams<Real>& params, std::span<const Real> grads, OptimizerState<Real>& state,
                double lr, const AdamWConfig& config) {
  const auto n = params.data.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw InvalidArgument("adamw_step: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Real b1 = static_cast<Real>(config.beta1);
  const Real b2 = static_cast<Real>(config.beta2);
  const Real bias1 = static_cast<Real>(1.0 - std::pow(config.beta1, t));
  const Real bias2 = static_cast<Real>(1.0 - std::pow(config.beta2, t));
  const Real step_size = static_cast<Real>(lr);
  const Real eps = static_cast<Real>(config.eps);
  const Real decay = static_cast<Real>(1.0 - lr * config.weight_decay);
  for (const auto& tensor : params.layout.tensors) {
    for (std::size_t i = tensor.offset; i < tensor.offset + tensor.size; ++i) {
      const Real gi = grads[i];
      state.m[i] = b1 * state.m[i] + (Real(1) - b1) * gi;
      state.v[i] = b2 * state.v[i] + (Real(1) - b2) * gi * gi;
      if (tensor.decay) params.data[i] *= decay;
      const Real m_hat = state.m[i] / bias1;
      const Real v_hat = state.v[i] / bias2;
      params.data[i] -= step_size * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

double lr_at(std::int64_t step, std::int64_t max_steps, std::int64_t warmup, double peak) {
  if (step < 0 || step > max_steps) throw InvalidArgument("lr_at: step outside [0, max_steps]");
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (max_steps == warmup) return peak;
  return peak * static_cast<double>(max_steps - step) / static_cast<double>(max_steps - warmup);
}

#define CURLM_INSTANTIATE(Real)                                                                     \
  template struct ModelParams<Real>;                                                                \
  template ModelParams<Real> init_model<Real>(const ModelConfig&, std::uint64_t);                   \
  template ForwardCache<Real> forward<Real>(const ModelParams<Real>&, const TokenBatch&,            \
                                            const ForwardOptions&);                                 \
  template LossValue loss<Real>(const Matrix<Real>&, const Matrix<Real>&, const LossTargets&,       \
                                const LossSpec&, LogitGradients<Real>*);                            \
  template std::vector<Real> backward<Real>(const ModelParams<Real>&, const ForwardCache<Real>&,    \
                                            const LogitGradients<Real>&);                           \
  template LossAndGradients<Real> loss_and_gradients<Real>(const ModelParams<Real>&,                \
                                                           const TokenBatch&, const LossTargets&,   \
                                                           const LossSpec&, const ForwardOptions&); \
  template void adamw_step<Real>(ModelParams<Real>&, std::span<const Real>, OptimizerState<Real>&,  \
                                 double, const AdamWConfig&);

CURLM_INSTANTIATE(float)
CURLM_INSTANTIATE(double)
#undef CURLM_INSTANTIATE

template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);

}  // namespace curlm::model

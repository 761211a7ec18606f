#include <benchmark/benchmark.h>

#include "curlm/eval.hpp"
#include "curlm/model.hpp"
#include "curlm/rng.hpp"

using namespace curlm;

namespace {

model::ModelConfig bench_config(int seq) {
  auto c = model::ModelConfig::desk();
  c.vocab_size = 1000;
  c.max_seq_len = seq;
  return c;
}

model::TokenBatch random_batch(int batch, int seq, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  model::TokenBatch b;
  b.batch = batch;
  b.seq = seq;
  for (int i = 0; i < batch * seq; ++i) {
    b.ids.push_back(static_cast<std::int32_t>(5 + rng.below(static_cast<std::uint64_t>(vocab - 5))));
    b.valid.push_back(1);
  }
  return b;
}

model::LossTargets every_seventh_masked(const model::TokenBatch& b) {
  model::LossTargets t;
  for (int r = 0; r < b.rows(); ++r) {
    t.vocab_target.push_back(r % 7 == 0 ? b.ids[static_cast<std::size_t>(r)] : -1);
    t.tag_target.push_back(r % 7 == 0 ? 9 : 0);
  }
  return t;
}

void BM_Forward(benchmark::State& state) {
  const int seq = static_cast<int>(state.range(0));
  const auto p = model::init_model<float>(bench_config(seq), 1);
  const auto batch = random_batch(16, seq, 1000, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model::forward(p, batch).vocab_logits.data());
  }
  state.SetItemsProcessed(state.iterations() * batch.rows());
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const int seq = static_cast<int>(state.range(0));
  auto p = model::init_model<float>(bench_config(seq), 1);
  auto opt = model::OptimizerState<float>::zeros(p.data.size());
  const auto batch = random_batch(16, seq, 1000, 3);
  const auto targets = every_seventh_masked(batch);
  const model::LossSpec spec{{9}, 1.0};
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto lg = model::loss_and_gradients(p, batch, targets, spec, {true, step++});
    model::adamw_step(p, std::span<const float>(lg.grads), opt, 1e-3);
  }
  state.SetItemsProcessed(state.iterations() * batch.rows());
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_PllScore(benchmark::State& state) {
  const auto p = model::init_model<double>(bench_config(64), 1);
  const auto b = random_batch(1, static_cast<int>(state.range(0)), 1000, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::pll_score_ids(p, b.ids));
  }
}
BENCHMARK(BM_PllScore)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

#include "disco/policy.hpp"
#include "disco/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

using disco::TokenSeq;
namespace policy = disco::policy;

TokenSeq random_tokens(std::size_t count, std::uint64_t seed) {
  disco::Rng rng(seed);
  TokenSeq seq(count);
  for (auto& t : seq) t = static_cast<disco::Token>(1 + rng.bounded(255));
  return seq;
}

void BM_Evaluate(benchmark::State& state) {
  const auto model = policy::PolicyModel::init(policy::ModelConfig{}, 1);
  const std::size_t total = static_cast<std::size_t>(state.range(0));
  const TokenSeq prompt = random_tokens(total / 2, 11);
  const TokenSeq code = random_tokens(total - total / 2, 12);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.evaluate(prompt, {}, code));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(total));
}
BENCHMARK(BM_Evaluate)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_EvaluateBackward(benchmark::State& state) {
  const auto model = policy::PolicyModel::init(policy::ModelConfig{}, 1);
  const std::size_t total = static_cast<std::size_t>(state.range(0));
  const TokenSeq prompt = random_tokens(total / 2, 11);
  const TokenSeq code = random_tokens(total - total / 2, 12);
  std::vector<double> grad(model.param_count(), 0.0);
  for (auto _ : state) {
    auto eval = model.evaluate(prompt, {}, code);
    const std::vector<double> d_trace(eval.trace.logp.size(), -1.0);
    model.backward(eval, d_trace, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(total));
}
BENCHMARK(BM_EvaluateBackward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_IncrementalDecode(benchmark::State& state) {
  const auto model = policy::PolicyModel::init(policy::ModelConfig{}, 1);
  const TokenSeq seq = random_tokens(static_cast<std::size_t>(state.range(0)), 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.incremental_logits(seq));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          state.range(0));
}
BENCHMARK(BM_IncrementalDecode)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_Sample(benchmark::State& state) {
  const auto model = policy::PolicyModel::init(policy::ModelConfig{}, 1);
  const TokenSeq prompt = random_tokens(32, 14);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        model.sample(prompt, 0.8, static_cast<int>(state.range(0)), ++seed));
  }
}
BENCHMARK(BM_Sample)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

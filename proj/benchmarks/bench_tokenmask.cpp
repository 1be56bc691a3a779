#include "disco/tokenmask.hpp"
#include "disco/rng.hpp"
#include "disco/tokens.hpp"

#include <benchmark/benchmark.h>

namespace {

using disco::TokenSeq;

// Two code bodies that share most of their tokens, the realistic case for an
// insecure/secure pair differing in a few calls.
std::pair<TokenSeq, TokenSeq> similar_pair(std::size_t length, std::uint64_t seed) {
  disco::Rng rng(seed);
  TokenSeq base(length);
  for (auto& t : base) t = static_cast<disco::Token>(32 + rng.bounded(90));
  TokenSeq other = base;
  for (std::size_t i = 0; i < length / 12 + 1; ++i) {
    other[rng.bounded(length)] = static_cast<disco::Token>(32 + rng.bounded(90));
  }
  return {base, other};
}

void BM_AlignTokens(benchmark::State& state) {
  const auto [a, b] = similar_pair(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(disco::tokenmask::align_tokens(a, b));
  }
}
BENCHMARK(BM_AlignTokens)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_ComputeMasks(benchmark::State& state) {
  const auto [plus, minus] = similar_pair(static_cast<std::size_t>(state.range(0)), 5);
  const TokenSeq reasoning(64, 100);
  for (auto _ : state) {
    benchmark::DoNotOptimize(disco::tokenmask::compute_masks(reasoning, plus, minus));
  }
}
BENCHMARK(BM_ComputeMasks)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

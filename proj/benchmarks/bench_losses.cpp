#include "disco/losses.hpp"
#include "disco/corpus.hpp"
#include "disco/policy.hpp"
#include "disco/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

namespace losses = disco::losses;
namespace policy = disco::policy;

std::vector<losses::EncodedInstance> make_batch(std::size_t count, int context) {
  std::vector<losses::EncodedInstance> batch;
  for (std::size_t i = 0; i < count; ++i) {
    disco::corpus::PreferenceInstance inst;
    inst.id = "bench-" + std::to_string(i);
    inst.x = "write the fetch helper, variant " + std::to_string(i);
    inst.reasoning = "verify certificates when talking to the service";
    inst.y_minus = "def fetch(u):\n    return get(u, verify=False)\n";
    inst.y_plus = "def fetch(u):\n    return get(u, verify=True)\n";
    batch.push_back(losses::encode_instance(inst, context));
  }
  return batch;
}

void BM_PairTermsLpo(benchmark::State& state) {
  const std::size_t length = static_cast<std::size_t>(state.range(0));
  disco::Rng rng(7);
  std::vector<double> tp(length), tm(length), mp(length), mm(length);
  for (std::size_t i = 0; i < length; ++i) {
    tp[i] = -0.1 - 3.0 * rng.uniform();
    tm[i] = -0.1 - 3.0 * rng.uniform();
    mp[i] = rng.bounded(4) == 0 ? 1.0 : 0.0;
    mm[i] = rng.bounded(4) == 0 ? 1.0 : 0.0;
  }
  const losses::PreferenceHyper hyper;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        losses::lpo_pair(tp, tm, mp, mm, length / 2.0, length / 2.0, hyper));
  }
}
BENCHMARK(BM_PairTermsLpo)->Arg(128)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_BatchLpoForward(benchmark::State& state) {
  const policy::ModelConfig config{256, 64, 2, 4, 512};
  const auto model = policy::PolicyModel::init(config, 1);
  const auto batch = make_batch(static_cast<std::size_t>(state.range(0)), config.context);
  const losses::PreferenceHyper hyper;
  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::batch_lpo(model, batch, hyper, nullptr));
  }
}
BENCHMARK(BM_BatchLpoForward)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_BatchLpoWithGrad(benchmark::State& state) {
  const policy::ModelConfig config{256, 64, 2, 4, 512};
  const auto model = policy::PolicyModel::init(config, 1);
  const auto batch = make_batch(static_cast<std::size_t>(state.range(0)), config.context);
  const losses::PreferenceHyper hyper;
  std::vector<double> grad(model.param_count(), 0.0);
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    benchmark::DoNotOptimize(losses::batch_lpo(model, batch, hyper, &grad));
  }
}
BENCHMARK(BM_BatchLpoWithGrad)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_BatchSftWithGrad(benchmark::State& state) {
  const policy::ModelConfig config{256, 64, 2, 4, 512};
  const auto model = policy::PolicyModel::init(config, 1);
  const auto batch = make_batch(static_cast<std::size_t>(state.range(0)), config.context);
  std::vector<double> grad(model.param_count(), 0.0);
  for (auto _ : state) {
    std::fill(grad.begin(), grad.end(), 0.0);
    benchmark::DoNotOptimize(losses::batch_sft(model, batch, &grad));
  }
}
BENCHMARK(BM_BatchSftWithGrad)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

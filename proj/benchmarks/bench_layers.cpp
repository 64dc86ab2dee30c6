#include <benchmark/benchmark.h>

#include "invnet/involution.hpp"
#include "invnet/layers.hpp"
#include "invnet/model.hpp"
#include "invnet/rng.hpp"

namespace {

using namespace invnet;

Tensor random_input(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

void BM_InvolutionForward(benchmark::State& state) {
  Rng rng(1);
  const InvolutionSpec spec = default_involution_spec();
  InvolutionWeights w = make_involution_weights(spec, rng);
  const Tensor x = random_input({state.range(0), 48, 48, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(involution_forward(x, w, spec, Mode::Train));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_InvolutionForward)->Arg(1)->Arg(32);

void BM_InvolutionBackward(benchmark::State& state) {
  Rng rng(2);
  const InvolutionSpec spec = default_involution_spec();
  InvolutionWeights w = make_involution_weights(spec, rng);
  const Tensor x = random_input({state.range(0), 48, 48, 3}, rng);
  const Tensor dy = random_input(x.shape(), rng);
  const InvolutionResult fwd = involution_forward(x, w, spec, Mode::Train);
  for (auto _ : state) benchmark::DoNotOptimize(involution_backward(x, w, spec, fwd.kernels, fwd.cache, dy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_InvolutionBackward)->Arg(1)->Arg(32);

void BM_Conv2DForward(benchmark::State& state) {
  Rng rng(3);
  const Conv2DWeights w = make_conv2d_weights(3, 3, 32, rng);
  const Tensor x = random_input({state.range(0), 48, 48, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, w));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv2DForward)->Arg(1)->Arg(32);

void BM_Conv2DBackward(benchmark::State& state) {
  Rng rng(4);
  const Conv2DWeights w = make_conv2d_weights(3, 32, 64, rng);
  const Tensor x = random_input({state.range(0), 23, 23, 32}, rng);
  const Tensor dy = random_input({state.range(0), 21, 21, 64}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, w, dy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv2DBackward)->Arg(1)->Arg(32);

void BM_ModelTrainStep(benchmark::State& state) {
  Rng rng(5);
  Model m = build_model(ModelVariant::hybrid(static_cast<int>(state.range(0))), rng);
  const Tensor x = random_input({32, 48, 48, 3}, rng);
  const Tensor labels = one_hot(std::vector<int>(32, 0), 2);
  for (auto _ : state) {
    const Tensor logits = m.forward(x, Mode::Train, rng);
    benchmark::DoNotOptimize(m.backward(softmax_xent(logits, labels).dlogits));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_ModelTrainStep)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_ModelPredict(benchmark::State& state) {
  Rng rng(6);
  Model m = build_model(ModelVariant::hybrid(3), rng);
  const Tensor x = random_input({state.range(0), 48, 48, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelPredict)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

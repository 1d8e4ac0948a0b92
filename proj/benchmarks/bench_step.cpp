#include <benchmark/benchmark.h>

#include "sfg/denoiser.hpp"
#include "sfg/rng.hpp"
#include "sfg/sampler.hpp"
#include "sfg/schedule.hpp"
#include "sfg/text_encoder.hpp"

namespace {

using namespace sfg;

struct Reference {
  DenoiserParams params = DenoiserParams::init({}, 3);
  EncoderParams encoder = EncoderParams::random({});
  NoiseSchedule sched = make_schedule(20);
  TextEmbeddings c = encode(tokenize("a red square left of a blue circle"), encoder);
  TextEmbeddings neg = null_embeddings(encoder);
  Tensor z = [] {
    Rng r(0x5EED);
    return randn(r, {64, 8});
  }();
};

const Reference& reference() {
  static const Reference ref;
  return ref;
}

void guided_step(benchmark::State& state, GuidanceMode mode) {
  const Reference& ref = reference();
  const GuidanceConfig cfg;
  Rng rng(1);
  for (auto _ : state) {
    const GuidedScore g = guided_score(ref.params, ref.z, 10, ref.sched, ref.c, ref.neg, cfg, mode);
    benchmark::DoNotOptimize(posterior_step(ref.z, g.eps, 10, ref.sched, rng));
  }
}

void BM_ClassifierFreeStep(benchmark::State& state) { guided_step(state, GuidanceMode::kClassifierFree); }
void BM_SegmentationFreeStep(benchmark::State& state) { guided_step(state, GuidanceMode::kSegmentationFree); }

void BM_ForwardPass(benchmark::State& state) {
  const Reference& ref = reference();
  const OverrideSpec spec = state.range(0) ? OverrideSpec::with_scale(10.0) : OverrideSpec::disabled();
  for (auto _ : state) benchmark::DoNotOptimize(predict_score(ref.z, 10, ref.sched, ref.c, spec, ref.params));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng r(2);
  const Tensor a = randn(r, {n, n});
  const Tensor b = randn(r, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}

BENCHMARK(BM_ClassifierFreeStep);
BENCHMARK(BM_SegmentationFreeStep);
BENCHMARK(BM_ForwardPass)->Arg(0)->Arg(1);
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();

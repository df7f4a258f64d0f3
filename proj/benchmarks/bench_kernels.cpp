#include <benchmark/benchmark.h>

#include <vector>

#include "mplab/layers.hpp"
#include "mplab/maskpool.hpp"
#include "mplab/minidet.hpp"
#include "mplab/rng.hpp"

using namespace mplab;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(s);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

// Half-FG mask with a diagonal boundary.
maskpool::BinaryMask diagonal_mask(int h, int w) {
  maskpool::BinaryMask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, x > y);
  return m;
}

// Feature map at the pooling slot of the default model: 8 x 16 x 64 x 64.
const Shape kSlot{8, 16, 64, 64};
const nn::PoolGeometry kPool{3, 2, 1};

}  // namespace

static void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({8, c, 32, 32}, 1);
  auto p = nn::LayerParams::conv(c, c, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, p, 1, 1));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

static void BM_Conv3x3Backward(benchmark::State& state) {
  const Tensor x = random_tensor({8, 32, 32, 32}, 2);
  auto p = nn::LayerParams::conv(32, 32, 3);
  const Tensor go = random_tensor({8, 32, 32, 32}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(x, p, go, 1, 1));
}
BENCHMARK(BM_Conv3x3Backward)->Unit(benchmark::kMicrosecond);

static void BM_MaxPool(benchmark::State& state) {
  const Tensor x = random_tensor(kSlot, 4);
  for (auto _ : state) benchmark::DoNotOptimize(nn::maxpool2d_forward(x, kPool));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMicrosecond);

static void BM_AvgPool(benchmark::State& state) {
  const Tensor x = random_tensor(kSlot, 5);
  for (auto _ : state) benchmark::DoNotOptimize(nn::avgpool2d_forward(x, kPool));
}
BENCHMARK(BM_AvgPool)->Unit(benchmark::kMicrosecond);

static void BM_MaskPool(benchmark::State& state) {
  const Tensor x = random_tensor(kSlot, 6);
  const std::vector<maskpool::BinaryMask> masks(static_cast<std::size_t>(kSlot.n), diagonal_mask(kSlot.h, kSlot.w));
  for (auto _ : state)
    benchmark::DoNotOptimize(maskpool::maskpool2d_forward(x, std::span<const maskpool::BinaryMask>(masks), kPool));
}
BENCHMARK(BM_MaskPool)->Unit(benchmark::kMicrosecond);

static void BM_MaskPoolBackward(benchmark::State& state) {
  const Tensor x = random_tensor(kSlot, 7);
  const std::vector<maskpool::BinaryMask> masks(static_cast<std::size_t>(kSlot.n), diagonal_mask(kSlot.h, kSlot.w));
  const auto fwd = maskpool::maskpool2d_forward(x, std::span<const maskpool::BinaryMask>(masks), kPool);
  const Tensor go = random_tensor(fwd.out.shape(), 8);
  for (auto _ : state)
    benchmark::DoNotOptimize(maskpool::maskpool2d_backward(std::span<const maskpool::BinaryMask>(masks), go, fwd.record));
}
BENCHMARK(BM_MaskPoolBackward)->Unit(benchmark::kMicrosecond);

static void BM_ModelForward(benchmark::State& state) {
  det::ModelConfig cfg;
  cfg.pooling = static_cast<det::PoolingVariant>(state.range(0));
  const auto model = det::build_model(cfg, 1);
  const Tensor x = random_tensor({8, 3, 128, 128}, 9);
  std::vector<maskpool::MaskPyramid> pyr;
  for (int i = 0; i < 8; ++i) pyr.push_back(det::make_pyramid(diagonal_mask(128, 128), model));
  for (auto _ : state) benchmark::DoNotOptimize(det::forward(model, x, pyr));
  state.SetLabel(det::to_string(cfg.pooling));
}
BENCHMARK(BM_ModelForward)
    ->Arg(static_cast<int>(det::PoolingVariant::max))
    ->Arg(static_cast<int>(det::PoolingVariant::avg))
    ->Arg(static_cast<int>(det::PoolingVariant::mask))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
